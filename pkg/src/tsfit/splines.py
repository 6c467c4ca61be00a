"""Univariate cubic B-spline evaluation via the Cox-de-Boor recursion.

Everything in this package is bicubic, so the kernel is specialised to
degree 3: a single basis function is determined by a window of five knots.
Two conventions are baked in and relied on throughout:

* any recursion term with a zero denominator contributes zero, and
* supports are half open, ``[k0, k4)``; coverage of the closed domain
  boundary is handled one level up (see ``surface.prepare_params``).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

DEGREE = 3


class InputError(ValueError):
    """A caller violated an operation's documented preconditions."""


def _as_knots5(knots: Sequence[float]) -> np.ndarray:
    k = np.asarray(knots, dtype=float)
    if k.shape != (DEGREE + 2,):
        raise InputError(f"expected a window of 5 knots, got shape {k.shape}")
    if not np.all(np.isfinite(k)):
        raise InputError("knots must be finite")
    if np.any(np.diff(k) < 0.0):
        raise InputError(f"knot vector must be non-decreasing: {k.tolist()}")
    return k


def window_eval(k: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Unrolled Cox-de-Boor recursion for one 5-knot window.

    ``k`` must already be validated and sorted; ``u`` is a float array.
    Returns an array of the same shape as ``u``.
    """
    k0, k1, k2, k3, k4 = (float(x) for x in k)
    zero = np.zeros_like(u)

    b0 = ((u >= k0) & (u < k1)).astype(float)
    b1 = ((u >= k1) & (u < k2)).astype(float)
    b2 = ((u >= k2) & (u < k3)).astype(float)
    b3 = ((u >= k3) & (u < k4)).astype(float)

    def term(num: np.ndarray, den: float, f: np.ndarray) -> np.ndarray:
        # zero-denominator terms are zero by convention
        return (num / den) * f if den > 0.0 else zero

    c0 = term(u - k0, k1 - k0, b0) + term(k2 - u, k2 - k1, b1)
    c1 = term(u - k1, k2 - k1, b1) + term(k3 - u, k3 - k2, b2)
    c2 = term(u - k2, k3 - k2, b2) + term(k4 - u, k4 - k3, b3)

    d0 = term(u - k0, k2 - k0, c0) + term(k3 - u, k3 - k1, c1)
    d1 = term(u - k1, k3 - k1, c1) + term(k4 - u, k4 - k2, c2)

    return term(u - k0, k3 - k0, d0) + term(k4 - u, k4 - k1, d1)


def cubic_bspline(knots: Sequence[float], u: float) -> float:
    """Evaluate the cubic B-spline with local knot window ``knots`` at ``u``.

    ``knots`` holds the five local knot coordinates.  The value is zero
    outside ``[knots[0], knots[4])``.  A window with zero measure (all
    knots equal) evaluates to zero everywhere.
    """
    k = _as_knots5(knots)
    return float(window_eval(k, np.asarray(u, dtype=float)))


def cubic_bspline_many(knots: Sequence[float], u: np.ndarray) -> np.ndarray:
    """Vectorised :func:`cubic_bspline` over an array of parameters."""
    k = _as_knots5(knots)
    return window_eval(k, np.asarray(u, dtype=float))


def cubic_bspline_general(global_knots: Sequence[float], i: int, u: float | np.ndarray):
    """Evaluate N_{i,3} over a full knot vector.

    ``i`` starts at 1, matching the usual indexing of the recursion: the
    i-th cubic basis function uses the knot window
    ``global_knots[i-1 : i+4]``.  A vector of length ``m`` therefore
    carries ``m - 4`` cubic basis functions.
    """
    g = np.asarray(global_knots, dtype=float)
    if g.ndim != 1:
        raise InputError("global knot vector must be one-dimensional")
    if np.any(np.diff(g) < 0.0):
        raise InputError("global knot vector must be non-decreasing")
    n = g.size - DEGREE - 1
    if not 1 <= i <= n:
        raise InputError(f"basis index {i} out of range 1..{n}")
    window = g[i - 1 : i + DEGREE + 1]
    out = window_eval(window, np.asarray(u, dtype=float))
    if np.isscalar(u) or np.ndim(u) == 0:
        return float(out)
    return out
