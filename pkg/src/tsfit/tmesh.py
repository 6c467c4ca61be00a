"""T-mesh over a rectangular parameter domain with parity-driven bisection.

Cells live on an exact integer lattice: every initial cell side spans
``2**SCALE_BITS`` ticks, and refinement only ever bisects, so cell corners
stay exactly representable and vertex/edge identity never needs an epsilon.
A cell of even level is bisected by a vertical line, a cell of odd level by
a horizontal line, so (for a square initial cell) even levels are squares
and odd levels are 2:1 rectangles.

Refining a cell additionally drags every coarser cell in a neighbourhood
box into the marked set, recursively, which keeps T-junctions of different
orientations roughly a polynomial degree's worth of cells apart.
"""

from __future__ import annotations

import json
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .splines import InputError

SCALE_BITS = 40
TICKS_PER_CELL = 1 << SCALE_BITS

# Closure-neighbourhood half extents, in multiples of the candidate cell's
# own width/height, independent of the bisection direction.  Keeping the
# extents proportional to the cell's own dimensions makes a child's box a
# subset of its parent's, which is what lets a single bisection per marked
# cell restore admissibility.
CLOSURE_EXTENT_U = 2
CLOSURE_EXTENT_V = 2


@dataclass(frozen=True)
class ParamRect:
    """Axis-parallel rectangle in parameter space."""

    u_min: float
    u_max: float
    v_min: float
    v_max: float

    def __post_init__(self) -> None:
        vals = (self.u_min, self.u_max, self.v_min, self.v_max)
        if not all(np.isfinite(v) for v in vals):
            raise InputError("rectangle bounds must be finite")
        if not (self.u_min < self.u_max and self.v_min < self.v_max):
            raise InputError(f"degenerate rectangle: {vals}")

    @property
    def width(self) -> float:
        return self.u_max - self.u_min

    @property
    def height(self) -> float:
        return self.v_max - self.v_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, u: float, v: float) -> bool:
        return self.u_min <= u <= self.u_max and self.v_min <= v <= self.v_max

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.u_min, self.u_max, self.v_min, self.v_max)


@dataclass(frozen=True)
class Cell:
    """Public snapshot of one mesh cell."""

    cid: int
    rect: ParamRect
    level: int


@dataclass(frozen=True)
class Anchor:
    """A mesh vertex with its inferred local knot windows.

    ``ku``/``kv`` hold five parameter coordinates each; the middle entry is
    the vertex coordinate, the outer ones come from marching along the
    vertex's horizontal/vertical ray and collecting crossed mesh lines,
    repeating the domain boundary where the ray leaves the domain.
    """

    vertex: tuple[float, float]
    ku: tuple[float, ...]
    kv: tuple[float, ...]
    weight: float = 1.0


class _Node:
    """Forest node; leaves are the live cells."""

    __slots__ = ("cid", "iu0", "iu1", "iv0", "iv1", "level", "children")

    def __init__(self, cid, iu0, iu1, iv0, iv1, level, children=()):
        self.cid = cid
        self.iu0 = iu0
        self.iu1 = iu1
        self.iv0 = iv0
        self.iv1 = iv1
        self.level = level
        self.children = children


def _merge_intervals(ivals: list[tuple[int, int]]) -> tuple[list[int], list[int]]:
    ivals.sort()
    starts: list[int] = []
    ends: list[int] = []
    for a, b in ivals:
        if starts and a <= ends[-1]:
            if b > ends[-1]:
                ends[-1] = b
        else:
            starts.append(a)
            ends.append(b)
    return starts, ends


def _covers(line: tuple[list[int], list[int]], t: int) -> bool:
    # closed coverage: an edge touching the ray at an endpoint counts
    starts, ends = line
    j = bisect_right(starts, t) - 1
    return j >= 0 and t <= ends[j]


class TMesh:
    """Immutable T-mesh; ``refine`` returns a new mesh sharing subtrees."""

    def __init__(self, domain: ParamRect, nu: int, nv: int,
                 roots: Sequence[_Node], next_id: int):
        self.domain = domain
        self.nu = nu
        self.nv = nv
        self._roots = tuple(roots)
        self._next_id = next_id
        self._leaves: dict[int, _Node] = {}
        for root in self._roots:
            stack = [root]
            while stack:
                n = stack.pop()
                if n.children:
                    stack.extend(n.children)
                else:
                    self._leaves[n.cid] = n
        self._lines = None
        self._vertices = None
        self._anchors = None

    # ------------------------------------------------------------------
    # construction

    @classmethod
    def new_uniform(cls, domain: ParamRect, nu: int, nv: int) -> "TMesh":
        """Tensor mesh of ``nu`` x ``nv`` congruent level-0 cells."""
        if nu < 1 or nv < 1:
            raise InputError("mesh dimensions must be at least 1x1")
        roots = []
        cid = 0
        for i in range(nu):
            for j in range(nv):
                roots.append(_Node(cid,
                                   i * TICKS_PER_CELL, (i + 1) * TICKS_PER_CELL,
                                   j * TICKS_PER_CELL, (j + 1) * TICKS_PER_CELL,
                                   0))
                cid += 1
        return cls(domain, nu, nv, roots, cid)

    @classmethod
    def from_cell_ticks(cls, domain: ParamRect, nu: int, nv: int,
                        cells: Iterable[tuple[int, int, int, int, int]]) -> "TMesh":
        """Rebuild a mesh from raw tick rectangles (deserialisation/tests).

        The cells are taken at face value as a flat forest: ``refine`` on
        such a mesh treats every cell as a root.  Intended for reloading
        serialised meshes and for constructing fixed test geometries.
        """
        roots = []
        for cid, (iu0, iu1, iv0, iv1, level) in enumerate(cells):
            if not (iu0 < iu1 and iv0 < iv1):
                raise InputError("degenerate cell in cell list")
            roots.append(_Node(cid, iu0, iu1, iv0, iv1, level))
        if not roots:
            raise InputError("empty cell list")
        mesh = cls(domain, nu, nv, roots, len(roots))
        total = (nu * TICKS_PER_CELL) * (nv * TICKS_PER_CELL)
        if sum((n.iu1 - n.iu0) * (n.iv1 - n.iv0) for n in roots) != total:
            raise InputError("cells do not tile the domain")
        return mesh

    # ------------------------------------------------------------------
    # tick <-> parameter maps

    @property
    def _ticks_u(self) -> int:
        return self.nu * TICKS_PER_CELL

    @property
    def _ticks_v(self) -> int:
        return self.nv * TICKS_PER_CELL

    def u_of_tick(self, t: int) -> float:
        return self.domain.u_min + self.domain.width * (t / self._ticks_u)

    def v_of_tick(self, t: int) -> float:
        return self.domain.v_min + self.domain.height * (t / self._ticks_v)

    def _tick_pos(self, u: float, v: float) -> tuple[float, float]:
        tu = (u - self.domain.u_min) / self.domain.width * self._ticks_u
        tv = (v - self.domain.v_min) / self.domain.height * self._ticks_v
        # snap float round-trip error so points constructed from mesh
        # coordinates land exactly on the lattice they came from
        ru, rv = round(tu), round(tv)
        if abs(tu - ru) <= TICKS_PER_CELL * 1e-9:
            tu = float(ru)
        if abs(tv - rv) <= TICKS_PER_CELL * 1e-9:
            tv = float(rv)
        return tu, tv

    # ------------------------------------------------------------------
    # cells

    @property
    def cells(self) -> list[Cell]:
        return [self._cell_of(n) for n in self._iter_leaves_sorted()]

    @property
    def cell_ids(self) -> set[int]:
        return set(self._leaves.keys())

    def cell(self, cid: int) -> Cell:
        try:
            return self._cell_of(self._leaves[cid])
        except KeyError:
            raise InputError(f"unknown cell id {cid}") from None

    def _cell_of(self, n: _Node) -> Cell:
        rect = ParamRect(self.u_of_tick(n.iu0), self.u_of_tick(n.iu1),
                         self.v_of_tick(n.iv0), self.v_of_tick(n.iv1))
        return Cell(n.cid, rect, n.level)

    def _iter_leaves_sorted(self) -> Iterator[_Node]:
        return iter(sorted(self._leaves.values(), key=lambda n: n.cid))

    def __len__(self) -> int:
        return len(self._leaves)

    def cell_at(self, p: tuple[float, float]) -> int:
        """Id of the cell containing ``p``; half-open cells, closed domain edge."""
        u, v = p
        if not self.domain.contains(u, v):
            raise InputError(f"point {p} outside the parametric domain")
        tu, tv = self._tick_pos(u, v)
        iu = min(int(tu // TICKS_PER_CELL), self.nu - 1)
        iv = min(int(tv // TICKS_PER_CELL), self.nv - 1)
        node = self._roots[iu * self.nv + iv]
        while node.children:
            lo, hi = node.children
            if lo.iu1 != hi.iu1:  # vertical split
                node = lo if tu < lo.iu1 else hi
            else:
                node = lo if tv < lo.iv1 else hi
        return node.cid

    # ------------------------------------------------------------------
    # refinement

    def _closure_box(self, n: _Node) -> tuple[int, int, int, int]:
        w = n.iu1 - n.iu0
        h = n.iv1 - n.iv0
        du = CLOSURE_EXTENT_U * w
        dv = CLOSURE_EXTENT_V * h
        return (n.iu0 - du, n.iu1 + du, n.iv0 - dv, n.iv1 + dv)

    def _leaves_in_box(self, box: tuple[int, int, int, int]) -> Iterator[_Node]:
        b0, b1, b2, b3 = box
        stack = list(self._roots)
        while stack:
            n = stack.pop()
            if n.iu1 > b0 and n.iu0 < b1 and n.iv1 > b2 and n.iv0 < b3:
                if n.children:
                    stack.extend(n.children)
                else:
                    yield n

    def refine(self, marked: Iterable[int]) -> "TMesh":
        """Bisect the marked cells plus their recursive closure.

        Every cell in the final marked set is bisected once, by its own
        level parity.  The closure repeatedly adds coarser cells found in
        the neighbourhood box of already-marked cells; it terminates
        because levels strictly decrease along each added chain.
        """
        ids = set(marked)
        unknown = ids - self._leaves.keys()
        if unknown:
            raise InputError(f"unknown cell ids: {sorted(unknown)}")
        if not ids:
            return self

        stack = sorted(ids)
        while stack:
            n = self._leaves[stack.pop()]
            for m in self._leaves_in_box(self._closure_box(n)):
                if m.level < n.level and m.cid not in ids:
                    ids.add(m.cid)
                    stack.append(m.cid)

        counter = [self._next_id]

        def rebuild(node: _Node) -> _Node:
            if not node.children:
                if node.cid not in ids:
                    return node
                ca, cb = counter[0], counter[0] + 1
                counter[0] += 2
                lvl = node.level + 1
                if node.level % 2 == 0:
                    mid = (node.iu0 + node.iu1) // 2
                    kids = (_Node(ca, node.iu0, mid, node.iv0, node.iv1, lvl),
                            _Node(cb, mid, node.iu1, node.iv0, node.iv1, lvl))
                else:
                    mid = (node.iv0 + node.iv1) // 2
                    kids = (_Node(ca, node.iu0, node.iu1, node.iv0, mid, lvl),
                            _Node(cb, node.iu0, node.iu1, mid, node.iv1, lvl))
                return _Node(node.cid, node.iu0, node.iu1, node.iv0, node.iv1,
                             node.level, kids)
            kids = tuple(rebuild(c) for c in node.children)
            if all(k is c for k, c in zip(kids, node.children)):
                return node
            return _Node(node.cid, node.iu0, node.iu1, node.iv0, node.iv1,
                         node.level, kids)

        roots2 = [rebuild(r) for r in self._roots]
        return TMesh(self.domain, self.nu, self.nv, roots2, counter[0])

    def is_admissible(self) -> bool:
        """Level gap within every cell's closure box is at most one."""
        for n in self._leaves.values():
            for m in self._leaves_in_box(self._closure_box(n)):
                if m.level < n.level - 1:
                    return False
        return True

    # ------------------------------------------------------------------
    # lines, vertices and anchors

    def _line_structs(self):
        if self._lines is None:
            vmap: dict[int, list[tuple[int, int]]] = {}
            hmap: dict[int, list[tuple[int, int]]] = {}
            for n in self._leaves.values():
                vmap.setdefault(n.iu0, []).append((n.iv0, n.iv1))
                vmap.setdefault(n.iu1, []).append((n.iv0, n.iv1))
                hmap.setdefault(n.iv0, []).append((n.iu0, n.iu1))
                hmap.setdefault(n.iv1, []).append((n.iu0, n.iu1))
            vticks = sorted(vmap)
            hticks = sorted(hmap)
            vlines = {t: _merge_intervals(vmap[t]) for t in vticks}
            hlines = {t: _merge_intervals(hmap[t]) for t in hticks}
            self._lines = (vticks, vlines, hticks, hlines)
        return self._lines

    @property
    def vertex_ticks(self) -> list[tuple[int, int]]:
        if self._vertices is None:
            seen = set()
            for n in self._leaves.values():
                seen.add((n.iu0, n.iv0))
                seen.add((n.iu0, n.iv1))
                seen.add((n.iu1, n.iv0))
                seen.add((n.iu1, n.iv1))
            self._vertices = sorted(seen)
        return self._vertices

    @property
    def vertices(self) -> list[tuple[float, float]]:
        return [(self.u_of_tick(a), self.v_of_tick(b)) for a, b in self.vertex_ticks]

    def _ray_knots(self, ticks: list[int], lines: dict, c0: int, cross: int,
                   t_max: int) -> tuple[int, int, int, int, int]:
        # nearest covered lines strictly on each side of c0; the domain
        # boundary coordinate is repeated where the ray leaves the domain
        left: list[int] = []
        j = bisect_left(ticks, c0) - 1
        while j >= 0 and len(left) < 2:
            t = ticks[j]
            if _covers(lines[t], cross):
                left.append(t)
            j -= 1
        while len(left) < 2:
            left.append(0)
        right: list[int] = []
        j = bisect_right(ticks, c0)
        while j < len(ticks) and len(right) < 2:
            t = ticks[j]
            if _covers(lines[t], cross):
                right.append(t)
            j += 1
        while len(right) < 2:
            right.append(t_max)
        return (left[1], left[0], c0, right[0], right[1])

    def anchor_at(self, vertex: tuple[float, float]) -> Anchor:
        """Anchor (local knot windows) for one mesh vertex."""
        lookup = {(self.u_of_tick(a), self.v_of_tick(b)): (a, b)
                  for a, b in self.vertex_ticks}
        key = (float(vertex[0]), float(vertex[1]))
        if key not in lookup:
            raise InputError(f"{vertex} is not a mesh vertex")
        return self._anchor_at_ticks(*lookup[key])

    def _anchor_at_ticks(self, ut: int, vt: int) -> Anchor:
        vticks, vlines, hticks, hlines = self._line_structs()
        ku_t = self._ray_knots(vticks, vlines, ut, vt, self._ticks_u)
        kv_t = self._ray_knots(hticks, hlines, vt, ut, self._ticks_v)
        return Anchor(vertex=(self.u_of_tick(ut), self.v_of_tick(vt)),
                      ku=tuple(self.u_of_tick(t) for t in ku_t),
                      kv=tuple(self.v_of_tick(t) for t in kv_t))

    def anchors(self) -> list[Anchor]:
        """One anchor per mesh vertex, ordered by (u, v)."""
        if self._anchors is None:
            self._anchors = [self._anchor_at_ticks(a, b) for a, b in self.vertex_ticks]
        return self._anchors

    # ------------------------------------------------------------------
    # T-junctions

    def tjunctions(self) -> list[tuple[float, float, str, int]]:
        """Interior valence-3 vertices as (u, v, orientation, level).

        Orientation is the direction of the hanging edge: 'vertical' when a
        vertical mesh line terminates at the vertex, 'horizontal' otherwise.
        Level is the finest level among the incident cells.
        """
        vticks, vlines, hticks, hlines = self._line_structs()
        out = []
        for ut, vt in self.vertex_ticks:
            if ut in (0, self._ticks_u) or vt in (0, self._ticks_v):
                continue
            vline = vlines.get(ut)
            hline = hlines.get(vt)
            up = vline is not None and self._covers_dir(vline, vt, +1)
            down = vline is not None and self._covers_dir(vline, vt, -1)
            left = hline is not None and self._covers_dir(hline, ut, -1)
            right = hline is not None and self._covers_dir(hline, ut, +1)
            if up + down + left + right != 3:
                continue
            orient = "vertical" if (not up or not down) else "horizontal"
            out.append((self.u_of_tick(ut), self.v_of_tick(vt), orient,
                        self._vertex_level(ut, vt)))
        return out

    @staticmethod
    def _covers_dir(line: tuple[list[int], list[int]], t: int, sign: int) -> bool:
        starts, ends = line
        j = bisect_right(starts, t) - 1
        if sign > 0:
            return j >= 0 and t < ends[j]
        return (j >= 0 and starts[j] < t <= ends[j]) or (
            j - 1 >= 0 and starts[j - 1] < t <= ends[j - 1])

    def _leaf_at_ticks(self, tu: int, tv: int) -> _Node | None:
        if not (0 <= tu < self._ticks_u and 0 <= tv < self._ticks_v):
            return None
        node = self._roots[(tu // TICKS_PER_CELL) * self.nv + tv // TICKS_PER_CELL]
        while node.children:
            lo, hi = node.children
            if lo.iu1 != hi.iu1:
                node = lo if tu < lo.iu1 else hi
            else:
                node = lo if tv < lo.iv1 else hi
        return node

    def _vertex_level(self, ut: int, vt: int) -> int:
        lvl = 0
        for du, dv in ((-1, -1), (-1, 0), (0, -1), (0, 0)):
            n = self._leaf_at_ticks(ut + du, vt + dv)
            if n is not None:
                lvl = max(lvl, n.level)
        return lvl

    # ------------------------------------------------------------------
    # serialisation

    def cell_tick_records(self) -> list[tuple[int, int, int, int, int]]:
        return [(n.iu0, n.iu1, n.iv0, n.iv1, n.level)
                for n in self._iter_leaves_sorted()]

    def to_json(self, include_anchors: bool = True) -> dict:
        """JSON-friendly record: one entry per cell and (optionally) anchor."""
        doc = {
            "domain": self.domain.as_tuple(),
            "grid": [self.nu, self.nv],
            "cells": [
                [c.rect.u_min, c.rect.u_max, c.rect.v_min, c.rect.v_max, c.level]
                for c in self.cells
            ],
            "cell_ticks": [list(r) for r in self.cell_tick_records()],
        }
        if include_anchors:
            doc["anchors"] = [
                {"u": a.vertex[0], "v": a.vertex[1],
                 "ku": list(a.ku), "kv": list(a.kv), "w": a.weight}
                for a in self.anchors()
            ]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "TMesh":
        domain = ParamRect(*doc["domain"])
        nu, nv = doc["grid"]
        cells = [tuple(r) for r in doc["cell_ticks"]]
        return cls.from_cell_ticks(domain, nu, nv, cells)

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    def to_svg(self, size: int = 640) -> str:
        """Render the mesh as an SVG line drawing (v axis pointing up)."""
        d = self.domain
        scale = size / max(d.width, d.height)
        wpx = d.width * scale
        hpx = d.height * scale

        def x(u: float) -> float:
            return (u - d.u_min) * scale

        def y(v: float) -> float:
            return (d.v_max - v) * scale

        lines = []
        seen = set()
        for c in self.cells:
            r = c.rect
            for seg in ((r.u_min, r.v_min, r.u_max, r.v_min),
                        (r.u_min, r.v_max, r.u_max, r.v_max),
                        (r.u_min, r.v_min, r.u_min, r.v_max),
                        (r.u_max, r.v_min, r.u_max, r.v_max)):
                if seg not in seen:
                    seen.add(seg)
                    lines.append(
                        f'<line x1="{x(seg[0]):.3f}" y1="{y(seg[1]):.3f}" '
                        f'x2="{x(seg[2]):.3f}" y2="{y(seg[3]):.3f}"/>'
                    )
        stroke = max(wpx, hpx) * 0.0015
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" '
            f'viewBox="0 0 {wpx:.3f} {hpx:.3f}">\n'
            f'<g stroke="black" stroke-width="{stroke:.4f}" '
            f'stroke-linecap="square" fill="none">\n'
            + "\n".join(lines) + "\n</g>\n</svg>\n"
        )
