"""Seed-reproducible synthetic benchmark surfaces and corruptions.

The reference height field is a sum of three parts on [-1, 1]^2: a tanh
ramp ("dam") whose steepness distinguishes the smooth and sharp variants,
a Gaussian bell, and seven small Gaussian ripples that keep the upper
plateau from being a plane.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .fitting import Observation
from .splines import InputError
from .tmesh import ParamRect

DOMAIN = ParamRect(-1.0, 1.0, -1.0, 1.0)
GAP_RECT = (-0.25, 0.0, -0.25, 0.0)  # (u_min, u_max, v_min, v_max)


class SurfaceKind(str, Enum):
    SMOOTH = "smooth"
    SHARP = "sharp"


_STEEPNESS = {SurfaceKind.SMOOTH: 9.0, SurfaceKind.SHARP: 30.0}

# amplitude, width, center_u, center_v
_RIPPLES = (
    (-0.03, 20.0, -0.5, 0.5),
    (0.03, 10.0, -0.6, 0.6),
    (-0.03, 10.0, -0.4, 0.6),
    (0.02, 10.0, -0.6, 0.4),
    (0.01, 10.0, -0.7, 0.3),
    (0.02, 10.0, -0.1, 0.7),
    (-0.01, 20.0, -0.6, 0.0),
)


def dam(u, v, steepness: float):
    return (np.tanh(steepness * (np.asarray(v) - np.asarray(u))) + 1.0) / 6.0


def bell(u, v):
    return 0.1 * np.exp(-30.0 * ((np.asarray(u) - 0.415) ** 2
                                 + (np.asarray(v) + 0.415) ** 2))


def ripples(u, v):
    u = np.asarray(u)
    v = np.asarray(v)
    z = np.zeros(np.broadcast(u, v).shape)
    for amp, width, cu, cv in _RIPPLES:
        z += amp * np.exp(-width * ((u - cu) ** 2 + (v - cv) ** 2))
    return z


def exact_surface(kind: SurfaceKind, u, v):
    """Noise-free height of the benchmark surface at (u, v)."""
    k = _STEEPNESS[SurfaceKind(kind)]
    return dam(u, v, k) + bell(u, v) + ripples(u, v)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one benchmark dataset."""

    kind: SurfaceKind = SurfaceKind.SMOOTH
    n: int = 200  # points per grid direction, n*n total
    sigma_z: float = 0.003
    sigma_xy: float = 0.001
    gap: bool = False
    gap_rect: tuple[float, float, float, float] = GAP_RECT
    outlier_fraction: float = 0.0
    outlier_cap: float = 10.0
    outlier_scale: float = 0.1
    outlier_df: float = 3.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 2:
            raise InputError("need at least a 2x2 sample grid")
        if self.sigma_z < 0 or self.sigma_xy < 0:
            raise InputError("noise levels must be non-negative")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise InputError("outlier fraction must lie in [0, 1]")


def sample_with_truth(spec: SyntheticSpec) -> tuple[list[Observation], dict]:
    """Draw the dataset for ``spec``; identical specs give identical bits.

    Noise is Gaussian and independent per component, drawn in the fixed
    order z, x, y from a PCG64 generator seeded with ``spec.seed``.  The
    x/y perturbations are applied in physical coordinates, so the
    parameters are the (clipped) noisy positions rather than the exact
    grid.  Gap removal and outliers are applied afterwards, in that order.

    The second return value carries per-point ground truth: ``z_exact``
    (height of the noise-free surface at the generating grid node) and an
    ``outlier`` flag array, both aligned with the returned observations.
    """
    rng = np.random.default_rng(spec.seed)
    ax = np.linspace(-1.0, 1.0, spec.n)
    U, V = np.meshgrid(ax, ax, indexing="ij")
    U = U.ravel()
    V = V.ravel()
    m = U.size
    z_exact = exact_surface(spec.kind, U, V)
    z = z_exact + rng.normal(0.0, spec.sigma_z, m)
    x = U + rng.normal(0.0, spec.sigma_xy, m)
    y = V + rng.normal(0.0, spec.sigma_xy, m)

    pu = np.clip(x, DOMAIN.u_min, DOMAIN.u_max)
    pv = np.clip(y, DOMAIN.v_min, DOMAIN.v_max)
    obs = [Observation((float(a), float(b)), (float(c), float(d), float(e)))
           for a, b, c, d, e in zip(pu, pv, x, y, z)]

    if spec.gap:
        u0, u1, v0, v1 = spec.gap_rect
        keep = ~((pu >= u0) & (pu <= u1) & (pv >= v0) & (pv <= v1))
        obs = [o for o, k in zip(obs, keep) if k]
        z_exact = z_exact[keep]
    flags = np.zeros(len(obs), dtype=bool)
    if spec.outlier_fraction > 0.0:
        seed = int(np.random.SeedSequence(entropy=spec.seed,
                                          spawn_key=(1,)).generate_state(1)[0])
        obs, idx = add_outliers(obs, spec.outlier_fraction, spec.outlier_cap,
                                seed, df=spec.outlier_df,
                                scale_factor=spec.outlier_scale)
        flags[idx] = True
    return obs, {"z_exact": z_exact, "outlier": flags}


def sample(spec: SyntheticSpec) -> list[Observation]:
    """Observations only; see :func:`sample_with_truth`."""
    return sample_with_truth(spec)[0]


def apply_gap(points: list[Observation],
              rect: tuple[float, float, float, float]) -> list[Observation]:
    """Remove observations whose (u, v) lies in the closed rectangle.

    Removal, not zeroing: a zeroed height would be an outlier, while the
    point of the gap datasets is that data is missing there.
    """
    u0, u1, v0, v1 = rect
    return [o for o in points
            if not (u0 <= o.param[0] <= u1 and v0 <= o.param[1] <= v1)]


def add_outliers(points: list[Observation], fraction: float, cap_factor: float,
                 seed: int, df: float = 3.0,
                 scale_factor: float = 0.1) -> tuple[list[Observation], np.ndarray]:
    """Add heavy-tailed height perturbations to a random subset of points.

    floor(fraction * n) points receive an additive Student-t draw (``df``
    degrees of freedom), scaled by ``scale_factor`` times max|z| of the
    point set and clipped so the added value never exceeds ``cap_factor``
    times that maximum.  Returns the contaminated list and the chosen
    indices.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InputError("outlier fraction must lie in [0, 1]")
    n = len(points)
    k = int(np.floor(fraction * n))
    if k == 0:
        return list(points), np.empty(0, dtype=int)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=k, replace=False))
    zmax = max(abs(o.phys[2]) for o in points)
    bump = np.clip(rng.standard_t(df, size=k) * scale_factor * zmax,
                   -cap_factor * zmax, cap_factor * zmax)
    out = list(points)
    for j, b in zip(idx, bump):
        o = out[j]
        out[j] = Observation(o.param, (o.phys[0], o.phys[1], o.phys[2] + float(b)))
    return out, idx


def spec_with_seed(spec: SyntheticSpec, seed: int) -> SyntheticSpec:
    return replace(spec, seed=seed)
