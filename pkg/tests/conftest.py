"""Shared independent oracles for the test suite.

These deliberately re-derive results through naive routes (literal
recursion, dense matrices) so the production code is checked against
something it does not share internals with.
"""

from __future__ import annotations

import numpy as np
import pytest

from tsfit.surface import TSplineSpace
from tsfit.tmesh import ParamRect, TMesh


def naive_bspline(knots, i, q, u):
    """Literal two-term recursion, 1-based index, no vectorisation."""
    if q == 0:
        return 1.0 if knots[i - 1] <= u < knots[i] else 0.0
    left = 0.0
    den = knots[i + q - 1] - knots[i - 1]
    if den != 0.0:
        left = (u - knots[i - 1]) / den * naive_bspline(knots, i, q - 1, u)
    right = 0.0
    den = knots[i + q] - knots[i]
    if den != 0.0:
        right = (knots[i + q] - u) / den * naive_bspline(knots, i + 1, q - 1, u)
    return left + right


def naive_cubic_window(knots5, u):
    return naive_bspline(list(knots5), 1, 3, u)


def tensor_nurbs_rows(Ku, Kv, params):
    """Dense normalised tensor-product rows built directly from global knots."""
    nu = len(Ku) - 4
    nv = len(Kv) - 4
    out = np.zeros((len(params), nu * nv))
    for r, (u, v) in enumerate(params):
        bu = np.array([naive_bspline(Ku, i, 3, u) for i in range(1, nu + 1)])
        bv = np.array([naive_bspline(Kv, j, 3, v) for j in range(1, nv + 1)])
        raw = np.outer(bu, bv).ravel()
        s = raw.sum()
        if s > 0:
            out[r] = raw / s
    return out


def dense_mta_oracle(B, residuals, th):
    """Literal dense evaluation of the two multilevel update formulas."""
    B = np.asarray(B, dtype=float)
    r = np.asarray(residuals, dtype=float)
    m, n = B.shape
    s = (B ** 2).sum(axis=1)
    phi = np.zeros((n, m))
    for c in range(m):
        for i in range(n):
            phi[i, c] = B[c, i] * r[c] / s[c] if s[c] > 0 else 0.0
    q = np.zeros(n)
    for i in range(n):
        in_supp = B[:, i] > 0
        if not in_supp.any():
            continue
        if np.all(np.abs(r[in_supp]) < th):
            continue
        num = sum(B[c, i] ** 2 * phi[i, c] for c in range(m) if in_supp[c])
        den = sum(B[c, i] ** 2 for c in range(m) if in_supp[c])
        if den > 0:
            q[i] = num / den
    return q


def random_admissible_mesh(rng, domain=None, nu=4, nv=4, rounds=3,
                           frac=6) -> TMesh:
    mesh = TMesh.new_uniform(domain or ParamRect(0.0, 1.0, 0.0, 1.0), nu, nv)
    for _ in range(rounds):
        ids = sorted(mesh.cell_ids)
        k = int(rng.integers(1, max(2, len(ids) // frac)))
        marked = set(rng.choice(ids, size=min(k, len(ids)), replace=False).tolist())
        mesh = mesh.refine(marked)
    return mesh


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def unit_square():
    return ParamRect(0.0, 1.0, 0.0, 1.0)


@pytest.fixture
def tensor_space(unit_square):
    return TSplineSpace(TMesh.new_uniform(unit_square, 4, 4))
