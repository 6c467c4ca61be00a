"""Bivariate T-spline basis assembly and surface evaluation.

Each mesh vertex carries one basis function, the product of the univariate
cubic B-splines built from its local knot windows, normalised rationally:

    B_z(u, v) = w_z * N[ku(z)](u) * N[kv(z)](v) / sum_r w_r N[ku(r)](u) N[kv(r)](v)

With unit weights this makes every admissible mesh a convex partition of
unity, including near the boundary where the raw products sum to less
than one.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
from scipy import sparse

from .splines import InputError, window_eval
from .tmesh import Anchor, ParamRect, TMesh

# Relative inward nudge applied to parameters that lie exactly on the
# domain boundary.  The raw basis products vanish there (boundary knot
# windows carry the edge coordinate with multiplicity three, not four), so
# the rational basis is evaluated as the limit from inside the domain.
BOUNDARY_NUDGE = 1e-13


class UncoveredPointError(RuntimeError):
    """No basis function is active at a parameter point.

    Cannot happen on admissible meshes with clamped boundaries; surfaced
    rather than silently treated as zero.
    """


class BasisValue(NamedTuple):
    anchor: int
    value: float


def prepare_params(domain: ParamRect, params: np.ndarray) -> np.ndarray:
    """Validate parameters against the domain and nudge boundary points in."""
    p = np.array(params, dtype=float, copy=True)
    if p.ndim != 2 or p.shape[1] != 2:
        raise InputError(f"expected an (m, 2) parameter array, got {p.shape}")
    tol_u = domain.width * 1e-9
    tol_v = domain.height * 1e-9
    if (np.any(p[:, 0] < domain.u_min - tol_u) or np.any(p[:, 0] > domain.u_max + tol_u)
            or np.any(p[:, 1] < domain.v_min - tol_v) or np.any(p[:, 1] > domain.v_max + tol_v)):
        raise InputError("parameter point outside the domain")
    eps_u = domain.width * BOUNDARY_NUDGE
    eps_v = domain.height * BOUNDARY_NUDGE
    np.clip(p[:, 0], domain.u_min + eps_u, domain.u_max - eps_u, out=p[:, 0])
    np.clip(p[:, 1], domain.v_min + eps_v, domain.v_max - eps_v, out=p[:, 1])
    return p


class TSplineSpace:
    """The spline space spanned by one anchor function per mesh vertex."""

    def __init__(self, mesh: TMesh):
        self.mesh = mesh
        self.anchors: list[Anchor] = mesh.anchors()
        self._ku = np.array([a.ku for a in self.anchors])
        self._kv = np.array([a.kv for a in self.anchors])
        self._w = np.array([a.weight for a in self.anchors])

    @property
    def n(self) -> int:
        return len(self.anchors)

    @property
    def domain(self) -> ParamRect:
        return self.mesh.domain

    def raw_basis_matrix(self, params: np.ndarray) -> sparse.csr_matrix:
        """Sparse (m, n) matrix of unnormalised products w * Nu * Nv."""
        p = prepare_params(self.domain, params)
        m = p.shape[0]
        order = np.argsort(p[:, 0], kind="stable")
        us = p[order, 0]
        vs = p[order, 1]

        rows: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        vals: list[np.ndarray] = []
        for j in range(self.n):
            ku = self._ku[j]
            kv = self._kv[j]
            lo = np.searchsorted(us, ku[0], side="left")
            hi = np.searchsorted(us, ku[4], side="left")
            if lo >= hi:
                continue
            vseg = vs[lo:hi]
            inside = (vseg >= kv[0]) & (vseg < kv[4])
            if not inside.any():
                continue
            bu = window_eval(ku, us[lo:hi][inside])
            bv = window_eval(kv, vseg[inside])
            b = self._w[j] * bu * bv
            nz = b > 0.0
            if not nz.any():
                continue
            rows.append(order[lo:hi][inside][nz])
            cols.append(np.full(int(nz.sum()), j, dtype=np.int64))
            vals.append(b[nz])

        if rows:
            data = np.concatenate(vals)
            coo = sparse.coo_matrix(
                (data, (np.concatenate(rows), np.concatenate(cols))),
                shape=(m, self.n))
        else:
            coo = sparse.coo_matrix((m, self.n))
        return coo.tocsr()

    def basis_matrix(self, params: np.ndarray) -> sparse.csr_matrix:
        """Row-normalised basis matrix; every row sums to one."""
        raw = self.raw_basis_matrix(params)
        sums = np.asarray(raw.sum(axis=1)).ravel()
        bad = np.flatnonzero(sums <= 0.0)
        if bad.size:
            u, v = np.asarray(params, dtype=float)[bad[0]]
            raise UncoveredPointError(
                f"no active basis function at ({u}, {v}); mesh does not cover it")
        return sparse.diags(1.0 / sums) @ raw

    def basis_row(self, p: tuple[float, float]) -> list[BasisValue]:
        """Active anchors and normalised values at one parameter point."""
        mat = self.basis_matrix(np.array([p], dtype=float)).tocoo()
        row = sorted(zip(mat.col.tolist(), mat.data.tolist()))
        return [BasisValue(int(j), float(b)) for j, b in row]


class TSplineSurface:
    """A T-spline space with coefficients, optionally stacked on a base.

    In ``heightfield`` mode the surface is S(u, v) = (u, v, z(u, v)) with
    one scalar coefficient per anchor; residual levels accumulated by the
    multilevel update are kept as separate (space, coefficients) layers and
    summed at evaluation, so no prolongation between the non-nested spaces
    is ever needed.  In ``points3d`` mode each anchor carries a control
    point in R^3 and stacking is not available.
    """

    def __init__(self, space: TSplineSpace, coeffs: np.ndarray,
                 mode: str = "heightfield", base: "TSplineSurface | None" = None):
        if mode not in ("heightfield", "points3d"):
            raise InputError(f"unknown surface mode {mode!r}")
        coeffs = np.asarray(coeffs, dtype=float)
        want = (space.n,) if mode == "heightfield" else (space.n, 3)
        if coeffs.shape != want:
            raise InputError(f"coefficient shape {coeffs.shape}, expected {want}")
        if base is not None:
            if mode != "heightfield":
                raise InputError("only height-field surfaces stack")
            if base.space.domain.as_tuple() != space.domain.as_tuple():
                raise InputError("stacked levels must share the parametric domain")
        self.space = space
        self.coeffs = coeffs
        self.mode = mode
        self.base = base

    # -- constructors ---------------------------------------------------

    @classmethod
    def heightfield(cls, space: TSplineSpace, z: np.ndarray) -> "TSplineSurface":
        return cls(space, z, mode="heightfield")

    @classmethod
    def points3d(cls, space: TSplineSpace, pts: np.ndarray) -> "TSplineSurface":
        return cls(space, pts, mode="points3d")

    def push_level(self, space: TSplineSpace) -> "TSplineSurface":
        """Stack a new zero-coefficient residual level on top of this surface."""
        return TSplineSurface(space, np.zeros(space.n), base=self)

    def with_coeffs(self, coeffs: np.ndarray) -> "TSplineSurface":
        return TSplineSurface(self.space, coeffs, mode=self.mode, base=self.base)

    # -- structure ------------------------------------------------------

    def levels(self) -> list["TSplineSurface"]:
        """Base-first list of the stacked levels."""
        out: list[TSplineSurface] = []
        s: TSplineSurface | None = self
        while s is not None:
            out.append(s)
            s = s.base
        out.reverse()
        return out

    @property
    def n_cp(self) -> int:
        """Coefficients carried by the finest level."""
        return self.space.n

    # -- evaluation -----------------------------------------------------

    def eval_z(self, params: np.ndarray) -> np.ndarray:
        if self.mode != "heightfield":
            raise InputError("eval_z requires a height-field surface")
        p = np.asarray(params, dtype=float)
        z = np.zeros(p.shape[0])
        for level in self.levels():
            z += level.space.basis_matrix(p) @ level.coeffs
        return z

    def eval(self, params: np.ndarray) -> np.ndarray:
        """Surface points in R^3 at an (m, 2) array of parameters."""
        p = np.asarray(params, dtype=float)
        if self.mode == "heightfield":
            return np.column_stack([p[:, 0], p[:, 1], self.eval_z(p)])
        return np.asarray(self.space.basis_matrix(p) @ self.coeffs)

    def eval_point(self, u: float, v: float) -> np.ndarray:
        return self.eval(np.array([[u, v]]))[0]

    def eval_grid(self, nu: int, nv: int) -> np.ndarray:
        """Evaluate on the closed-domain tensor grid; shape (nu, nv, 3)."""
        if nu < 2 or nv < 2:
            raise InputError("grid needs at least 2 samples per direction")
        d = self.space.domain
        uu = np.linspace(d.u_min, d.u_max, nu)
        vv = np.linspace(d.v_min, d.v_max, nv)
        U, V = np.meshgrid(uu, vv, indexing="ij")
        pts = self.eval(np.column_stack([U.ravel(), V.ravel()]))
        return pts.reshape(nu, nv, 3)


def tensor_knot_vectors(mesh: TMesh) -> tuple[np.ndarray, np.ndarray]:
    """Global knot vectors induced by a tensor-product mesh.

    Valid only when every mesh line spans the whole domain.  The boundary
    knots appear with multiplicity three, matching the anchors' clamped
    windows, so the tensor-product basis built from these vectors equals
    the T-spline basis on the same mesh.
    """
    uticks = sorted({t for n in mesh._leaves.values() for t in (n.iu0, n.iu1)})
    vticks = sorted({t for n in mesh._leaves.values() for t in (n.iv0, n.iv1)})
    expect = len(uticks) * len(vticks)
    if len(mesh.vertex_ticks) != expect:
        raise InputError("mesh is not a tensor-product grid")
    ku = [mesh.u_of_tick(t) for t in uticks]
    kv = [mesh.v_of_tick(t) for t in vticks]
    Ku = np.array([ku[0]] * 2 + ku + [ku[-1]] * 2)
    Kv = np.array([kv[0]] * 2 + kv + [kv[-1]] * 2)
    return Ku, Kv


def write_xyz_grid(path, grid: np.ndarray) -> None:
    """Write an eval_grid result as whitespace-separated XYZ rows, row-major."""
    pts = np.asarray(grid, dtype=float).reshape(-1, 3)
    with open(path, "w", encoding="ascii") as fh:
        for x, y, z in pts:
            fh.write(f"{x!r} {y!r} {z!r}\n")
