"""Per-iteration performance indicators for a fitted surface."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

CSV_HEADER = "iter,rmse_noise,rmse_math,maxerr,n_out,n_cp,ct_seconds"


@dataclass
class FitReport:
    """One iteration's indicator set.

    ``rmse_*`` use the 1/sqrt(n_obs) normalisation; ``rmse_math`` is None
    when no ground truth is available.  ``ct_seconds`` is wall time and is
    the only field excluded from reproducibility comparisons.
    """

    iteration: int = 0
    rmse_noise: float = math.nan
    rmse_math: float | None = None
    maxerr: float = math.nan
    n_out: int = 0
    n_cp: int = 0
    ct_seconds: float = 0.0

    def csv_row(self) -> str:
        rm = "" if self.rmse_math is None else repr(self.rmse_math)
        return (f"{self.iteration},{self.rmse_noise!r},{rm},{self.maxerr!r},"
                f"{self.n_out},{self.n_cp},{self.ct_seconds!r}")


def evaluate(surface, obs, exact_fn: Callable | None = None, th: float = 0.01,
             indicators: np.ndarray | None = None) -> FitReport:
    """Compute the indicator set of ``surface`` against noisy observations.

    ``exact_fn(u, v)`` supplies noise-free heights for ``rmse_math`` when
    the ground truth is known.  ``indicators`` can pass in precomputed
    pointwise errors to avoid re-evaluating the surface.
    """
    from .fitting import error_indicators, observation_arrays

    params, phys = observation_arrays(obs)
    e = np.asarray(indicators, dtype=float) if indicators is not None \
        else error_indicators(surface, obs)
    report = FitReport(
        rmse_noise=float(np.sqrt(np.mean(e ** 2))),
        maxerr=float(e.max()),
        n_out=int((e > th).sum()),
        n_cp=surface.n_cp,
    )
    if exact_fn is not None:
        z_exact = np.asarray(exact_fn(params[:, 0], params[:, 1]), dtype=float)
        if surface.mode == "heightfield":
            em = surface.eval_z(params) - z_exact
        else:
            em = surface.eval(params)[:, 2] - z_exact
        report.rmse_math = float(np.sqrt(np.mean(em ** 2)))
    return report


def write_reports(path, reports) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in reports:
            fh.write(r.csv_row() + "\n")
