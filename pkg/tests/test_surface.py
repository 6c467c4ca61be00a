import numpy as np
import pytest

from tsfit.splines import InputError
from tsfit.surface import (TSplineSpace, TSplineSurface, UncoveredPointError,
                           tensor_knot_vectors)
from tsfit.tmesh import ParamRect, TMesh

from conftest import random_admissible_mesh, tensor_nurbs_rows


def test_rows_sum_to_one_random_meshes(rng):
    for _ in range(6):
        space = TSplineSpace(random_admissible_mesh(rng, nu=4, nv=4, rounds=3))
        P = rng.uniform(0.0, 1.0, (400, 2))
        B = space.basis_matrix(P)
        sums = np.asarray(B.sum(axis=1)).ravel()
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)


def test_rows_nonnegative(rng, tensor_space):
    P = rng.uniform(0.0, 1.0, (500, 2))
    B = tensor_space.basis_matrix(P)
    assert B.data.min() > 0.0


def test_tensor_mesh_equals_nurbs_oracle(rng, tensor_space):
    Ku, Kv = tensor_knot_vectors(tensor_space.mesh)
    P = rng.uniform(0.0, 1.0, (120, 2))
    dense = tensor_space.basis_matrix(P).toarray()
    # anchors are (u, v)-lexicographic, matching the oracle's row-major order
    oracle = tensor_nurbs_rows(Ku, Kv, P)
    np.testing.assert_allclose(dense, oracle, atol=1e-12)


def test_corner_is_single_anchor(tensor_space):
    d = tensor_space.domain
    for corner in ((d.u_min, d.v_min), (d.u_max, d.v_max), (d.u_min, d.v_max)):
        row = tensor_space.basis_row(corner)
        values = sorted((b for _, b in row), reverse=True)
        assert values[0] == pytest.approx(1.0, abs=1e-12)
        assert all(v <= 1e-12 for v in values[1:])


def test_uncovered_point_is_surfaced(tensor_space):
    # white-box: shrink every support so a point is genuinely uncovered
    space = TSplineSpace(tensor_space.mesh)
    space._ku = np.full_like(space._ku, 0.0)
    space._kv = np.full_like(space._kv, 0.0)
    with pytest.raises(UncoveredPointError):
        space.basis_matrix(np.array([[0.5, 0.5]]))


def test_params_outside_domain_rejected(tensor_space):
    with pytest.raises(InputError):
        tensor_space.basis_matrix(np.array([[1.5, 0.5]]))


def test_constant_control_points_reproduced(rng):
    space = TSplineSpace(random_admissible_mesh(rng, nu=4, nv=4, rounds=2))
    C = np.array([1.25, -0.5, 2.0])
    surf = TSplineSurface.points3d(space, np.tile(C, (space.n, 1)))
    P = rng.uniform(0.0, 1.0, (200, 2))
    np.testing.assert_allclose(surf.eval(P), np.tile(C, (200, 1)), atol=1e-12)


def test_zero_heightfield(rng, tensor_space):
    surf = TSplineSurface.heightfield(tensor_space, np.zeros(tensor_space.n))
    P = rng.uniform(0.0, 1.0, (100, 2))
    assert np.all(surf.eval_z(P) == 0.0)
    pts = surf.eval(P)
    np.testing.assert_allclose(pts[:, :2], P)


def test_stacked_level_preserves_values_exactly(rng):
    mesh = random_admissible_mesh(rng, nu=4, nv=4, rounds=1)
    space = TSplineSpace(mesh)
    surf = TSplineSurface.heightfield(space, rng.normal(0, 1, space.n))
    finer = TSplineSpace(mesh.refine(set(sorted(mesh.cell_ids)[:5])))
    stacked = surf.push_level(finer)
    P = rng.uniform(0.0, 1.0, (1000, 2))
    np.testing.assert_array_equal(stacked.eval_z(P), surf.eval_z(P))
    assert stacked.n_cp == finer.n
    assert len(stacked.levels()) == 2


def test_eval_grid_corners(tensor_space):
    surf = TSplineSurface.heightfield(tensor_space, np.arange(tensor_space.n, dtype=float))
    g = surf.eval_grid(2, 2)
    d = tensor_space.domain
    assert g.shape == (2, 2, 3)
    np.testing.assert_allclose(g[0, 0, :2], [d.u_min, d.v_min])
    np.testing.assert_allclose(g[1, 1, :2], [d.u_max, d.v_max])


def test_eval_grid_matches_pointwise(tensor_space, rng):
    surf = TSplineSurface.heightfield(tensor_space, rng.normal(0, 1, tensor_space.n))
    g = surf.eval_grid(5, 4)
    d = tensor_space.domain
    uu = np.linspace(d.u_min, d.u_max, 5)
    vv = np.linspace(d.v_min, d.v_max, 4)
    for i, u in enumerate(uu):
        for j, v in enumerate(vv):
            np.testing.assert_array_equal(g[i, j], surf.eval_point(u, v))


def test_eval_grid_validates_size(tensor_space):
    surf = TSplineSurface.heightfield(tensor_space, np.zeros(tensor_space.n))
    with pytest.raises(InputError):
        surf.eval_grid(1, 5)


def test_convex_hull_property(rng):
    space = TSplineSpace(random_admissible_mesh(rng, nu=4, nv=4, rounds=2))
    pts = rng.normal(0, 1, (space.n, 3))
    surf = TSplineSurface.points3d(space, pts)
    out = surf.eval(rng.uniform(0, 1, (300, 2)))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


def test_locality_of_coefficients(rng):
    space = TSplineSpace(random_admissible_mesh(rng, nu=4, nv=4, rounds=2))
    z = rng.normal(0, 1, space.n)
    surf = TSplineSurface.heightfield(space, z)
    j = int(rng.integers(0, space.n))
    z2 = z.copy()
    z2[j] += 0.7
    surf2 = TSplineSurface.heightfield(space, z2)
    a = space.anchors[j]
    P = rng.uniform(0, 1, (600, 2))
    dz = np.abs(surf2.eval_z(P) - surf.eval_z(P))
    inside = ((P[:, 0] >= a.ku[0]) & (P[:, 0] < a.ku[4])
              & (P[:, 1] >= a.kv[0]) & (P[:, 1] < a.kv[4]))
    assert np.all(dz[~inside] == 0.0)


def test_support_overlap_cap(rng):
    for _ in range(4):
        space = TSplineSpace(random_admissible_mesh(rng, nu=6, nv=6, rounds=4))
        P = rng.uniform(0, 1, (400, 2))
        B = space.basis_matrix(P)
        assert int(np.diff(B.indptr).max()) <= 32


def test_tensor_knots_reject_tmesh(rng):
    mesh = TMesh.new_uniform(ParamRect(0, 1, 0, 1), 4, 4)
    mesh = mesh.refine({mesh.cell_at((0.6, 0.6))})
    with pytest.raises(InputError):
        tensor_knot_vectors(mesh)


def test_coefficient_shape_validated(tensor_space):
    with pytest.raises(InputError):
        TSplineSurface.heightfield(tensor_space, np.zeros(tensor_space.n + 1))
    with pytest.raises(InputError):
        TSplineSurface.points3d(tensor_space, np.zeros(tensor_space.n))
