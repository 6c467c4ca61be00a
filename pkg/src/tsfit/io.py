"""Point-cloud ingestion, parametrization, surface files and differencing."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fitting import Observation
from .splines import InputError
from .surface import TSplineSpace, TSplineSurface
from .tmesh import ParamRect, TMesh


class LoadError(InputError):
    """A point-cloud file could not be parsed."""


@dataclass
class PointCloud:
    points: np.ndarray  # (m, 3)
    source: str = ""
    units: str | None = None

    def __len__(self) -> int:
        return len(self.points)


def read_xyz(path, units: str | None = None) -> PointCloud:
    """Read whitespace- or comma-separated numeric rows as x y z points.

    The first three columns of each row are taken as x, y, z; extra
    columns are ignored.  Lines that are blank or start with '#' are
    skipped.  Short rows or non-finite values fail the load, with the
    offending line numbers in the error message.
    """
    rows: list[tuple[float, float, float]] = []
    bad: list[int] = []
    try:
        fh = open(path, "r", encoding="ascii", errors="replace")
    except OSError as err:
        raise LoadError(f"cannot read {path}: {err}") from err
    with fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.replace(",", " ").split()
            if len(parts) < 3:
                bad.append(lineno)
                continue
            try:
                x, y, z = float(parts[0]), float(parts[1]), float(parts[2])
            except ValueError:
                bad.append(lineno)
                continue
            if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
                bad.append(lineno)
                continue
            rows.append((x, y, z))
    if bad:
        shown = ", ".join(str(b) for b in bad[:10])
        more = "" if len(bad) <= 10 else f" (+{len(bad) - 10} more)"
        raise LoadError(f"{path}: malformed rows at lines {shown}{more}")
    if not rows:
        raise LoadError(f"{path}: no valid data rows")
    return PointCloud(points=np.array(rows, dtype=float), source=str(path),
                      units=units)


def write_xyz(path, points: np.ndarray) -> None:
    """Write points as shortest-round-trip decimal rows, no locale effects."""
    pts = np.asarray(points, dtype=float)
    with open(path, "w", encoding="ascii") as fh:
        for row in pts:
            fh.write(" ".join(repr(float(v)) for v in row[:3]) + "\n")


@dataclass(frozen=True)
class AffineMap2D:
    """Affine map between physical (x, y) and the unit parameter square."""

    x0: float
    y0: float
    sx: float
    sy: float

    def to_param(self, x, y):
        return (np.asarray(x) - self.x0) / self.sx, (np.asarray(y) - self.y0) / self.sy

    def to_phys(self, u, v):
        return self.x0 + np.asarray(u) * self.sx, self.y0 + np.asarray(v) * self.sy

    def as_dict(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "sx": self.sx, "sy": self.sy}

    @classmethod
    def from_dict(cls, d: dict) -> "AffineMap2D":
        return cls(d["x0"], d["y0"], d["sx"], d["sy"])


def parametrize(cloud: PointCloud) -> tuple[list[Observation], AffineMap2D]:
    """Map the cloud's (x, y) bounding box affinely onto [0, 1]^2.

    Returns the parametrized observations together with the map, which is
    needed later to report results in physical coordinates.  Degenerate
    (zero-area) bounding boxes are rejected.
    """
    pts = cloud.points
    if pts.shape[0] == 0:
        raise InputError("empty point cloud")
    x0, y0 = pts[:, 0].min(), pts[:, 1].min()
    sx = pts[:, 0].max() - x0
    sy = pts[:, 1].max() - y0
    if sx <= 0.0 or sy <= 0.0:
        raise InputError("point cloud bounding box has zero area")
    tr = AffineMap2D(float(x0), float(y0), float(sx), float(sy))
    u, v = tr.to_param(pts[:, 0], pts[:, 1])
    u = np.clip(u, 0.0, 1.0)
    v = np.clip(v, 0.0, 1.0)
    obs = [Observation((float(a), float(b)), (float(x), float(y), float(z)))
           for a, b, (x, y, z) in zip(u, v, pts)]
    return obs, tr


def diff_surfaces(surf_a: TSplineSurface, surf_b: TSplineSurface,
                  nu: int, nv: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """z difference of two height-field surfaces on a common parameter grid.

    Both surfaces must share the parametric domain; the returned arrays
    are the grid coordinates U, V and z_a - z_b, each of shape (nu, nv).
    """
    da = surf_a.space.domain
    db = surf_b.space.domain
    if da.as_tuple() != db.as_tuple():
        raise InputError("surfaces are defined over different parametric domains")
    if nu < 2 or nv < 2:
        raise InputError("difference grid needs at least 2 samples per direction")
    uu = np.linspace(da.u_min, da.u_max, nu)
    vv = np.linspace(da.v_min, da.v_max, nv)
    U, V = np.meshgrid(uu, vv, indexing="ij")
    P = np.column_stack([U.ravel(), V.ravel()])
    dz = surf_a.eval_z(P) - surf_b.eval_z(P)
    return U, V, dz.reshape(nu, nv)


def write_diff_grid(path, U, V, dz, transform: AffineMap2D | None = None) -> None:
    """Write difference rows as 'x y dz' (physical x, y when a map is given)."""
    if transform is not None:
        X, Y = transform.to_phys(U, V)
    else:
        X, Y = U, V
    rows = np.column_stack([np.asarray(X).ravel(), np.asarray(Y).ravel(),
                            np.asarray(dz).ravel()])
    write_xyz(path, rows)


# ----------------------------------------------------------------------
# surface files

def save_surface(path, surface: TSplineSurface,
                 transform: AffineMap2D | None = None,
                 meta: dict | None = None) -> None:
    """Serialise a surface (all stacked levels) to JSON."""
    doc = {
        "format": "tsfit-surface",
        "version": 1,
        "mode": surface.mode,
        "transform": transform.as_dict() if transform is not None else None,
        "levels": [
            {
                "mesh": lvl.space.mesh.to_json(include_anchors=False),
                "coeffs": lvl.coeffs.tolist(),
            }
            for lvl in surface.levels()
        ],
    }
    if meta:
        doc["meta"] = meta
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_surface(path) -> tuple[TSplineSurface, AffineMap2D | None]:
    with open(path, "r", encoding="ascii") as fh:
        doc = json.load(fh)
    if doc.get("format") != "tsfit-surface":
        raise LoadError(f"{path}: not a surface file")
    mode = doc["mode"]
    surface: TSplineSurface | None = None
    for lvl in doc["levels"]:
        space = TSplineSpace(TMesh.from_json(lvl["mesh"]))
        coeffs = np.asarray(lvl["coeffs"], dtype=float)
        if surface is None:
            surface = TSplineSurface(space, coeffs, mode=mode)
        else:
            surface = TSplineSurface(space, coeffs, mode=mode, base=surface)
    if surface is None:
        raise LoadError(f"{path}: surface file has no levels")
    tr = doc.get("transform")
    return surface, (AffineMap2D.from_dict(tr) if tr else None)
