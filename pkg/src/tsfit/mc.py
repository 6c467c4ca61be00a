"""Monte-Carlo harness: repeated noisy fits with deterministic seeds."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .fitting import FitConfig, FitResult, fit
from .metrics import FitReport, write_reports
from .splines import InputError
from .synthdata import SyntheticSpec, exact_surface, sample

AGG_HEADER = ("iter,runs," +
              ",".join(f"mean_{f},std_{f}" for f in
                       ("rmse_noise", "rmse_math", "maxerr", "n_out",
                        "n_cp", "ct_seconds")))


@dataclass(frozen=True)
class Experiment:
    """One (dataset recipe, fit configuration) pair replicated over seeds."""

    spec: SyntheticSpec
    cfg: FitConfig
    n_runs: int = 3
    base_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_runs < 1:
            raise InputError("n_runs must be at least 1")

    def run_seed(self, run_index: int) -> int:
        seq = np.random.SeedSequence(entropy=self.base_seed,
                                     spawn_key=(run_index,))
        return int(seq.generate_state(1)[0])


@dataclass
class RunRecord:
    run_index: int
    seed: int
    reports: list[FitReport] = field(default_factory=list)
    error: str | None = None


@dataclass
class ExperimentResult:
    experiment: Experiment
    runs: list[RunRecord]

    @property
    def excluded(self) -> list[RunRecord]:
        return [r for r in self.runs if r.error is not None]

    def aggregate_rows(self) -> list[dict]:
        """Per-iteration mean and std of every report field across runs.

        A run contributes to iteration k only if it reached it; failed
        runs are excluded entirely (their count is in ``excluded``).
        """
        good = [r.reports for r in self.runs if r.error is None]
        if not good:
            return []
        rows = []
        for k in range(1, max(len(rep) for rep in good) + 1):
            at_k = [rep[k - 1] for rep in good if len(rep) >= k]
            row: dict = {"iter": k, "runs": len(at_k)}
            for name in ("rmse_noise", "rmse_math", "maxerr", "n_out",
                         "n_cp", "ct_seconds"):
                vals = [getattr(r, name) for r in at_k]
                if any(v is None for v in vals):
                    row[f"mean_{name}"] = None
                    row[f"std_{name}"] = None
                else:
                    arr = np.asarray(vals, dtype=float)
                    row[f"mean_{name}"] = float(arr.mean())
                    row[f"std_{name}"] = float(arr.std())
            rows.append(row)
        return rows

    def final_means(self) -> dict:
        rows = self.aggregate_rows()
        if not rows:
            raise InputError("experiment produced no successful runs")
        return rows[-1]


def run_experiment(exp: Experiment, use_truth: bool = True) -> ExperimentResult:
    """Execute all runs sequentially with per-run seeds derived from the base."""
    exact = None
    if use_truth:
        kind = exp.spec.kind
        exact = lambda u, v: exact_surface(kind, u, v)  # noqa: E731
    runs: list[RunRecord] = []
    for r in range(exp.n_runs):
        seed = exp.run_seed(r)
        rec = RunRecord(run_index=r, seed=seed)
        try:
            obs = sample(replace(exp.spec, seed=seed))
            result: FitResult = fit(obs, exp.cfg, exact_fn=exact)
            rec.reports = result.reports
        except Exception as err:  # noqa: BLE001 - failures are data, not aborts
            rec.error = f"{type(err).__name__}: {err}"
        runs.append(rec)
    return ExperimentResult(experiment=exp, runs=runs)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else "nan"
    return str(v)


def write_experiment(out_dir, name: str, result: ExperimentResult) -> None:
    """Aggregate CSV + per-run CSVs + a manifest of seeds and exclusions."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{name}_aggregate.csv", "w", encoding="ascii") as fh:
        fh.write(AGG_HEADER + "\n")
        for row in result.aggregate_rows():
            cols = [row["iter"], row["runs"]]
            for f in ("rmse_noise", "rmse_math", "maxerr", "n_out",
                      "n_cp", "ct_seconds"):
                cols.extend([row[f"mean_{f}"], row[f"std_{f}"]])
            fh.write(",".join(_fmt(c) for c in cols) + "\n")
    for rec in result.runs:
        if rec.error is None:
            write_reports(out / f"{name}_run{rec.run_index}.csv", rec.reports)
    manifest = {
        "name": name,
        "n_runs": result.experiment.n_runs,
        "base_seed": result.experiment.base_seed,
        "seeds": [rec.seed for rec in result.runs],
        "excluded": [
            {"run": rec.run_index, "seed": rec.seed, "error": rec.error}
            for rec in result.excluded
        ],
    }
    with open(out / f"{name}_manifest.json", "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
