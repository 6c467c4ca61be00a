import numpy as np
import pytest

import tsfit.fitting as fitting
from tsfit.fitting import (FitConfig, Method, Observation, SolverError,
                           assemble, error_indicators, fit, mark, mta_update,
                           observation_arrays, solve_ls)
from tsfit.splines import InputError
from tsfit.surface import TSplineSpace, TSplineSurface
from tsfit.tmesh import ParamRect, TMesh

from conftest import dense_mta_oracle, random_admissible_mesh

DOM = ParamRect(0.0, 1.0, 0.0, 1.0)


def make_obs(params, z):
    return [Observation((float(u), float(v)), (float(u), float(v), float(w)))
            for (u, v), w in zip(params, z)]


# ----------------------------------------------------------------------
# error indicators

def test_indicators_zero_on_interpolant(rng, tensor_space):
    z = rng.normal(0, 1, tensor_space.n)
    surf = TSplineSurface.heightfield(tensor_space, z)
    P = rng.uniform(0, 1, (50, 2))
    obs = make_obs(P, surf.eval_z(P))
    np.testing.assert_allclose(error_indicators(surf, obs), 0.0, atol=1e-13)


def test_indicators_flat_zero_surface(tensor_space):
    surf = TSplineSurface.heightfield(tensor_space, np.zeros(tensor_space.n))
    obs = make_obs([(0.3, 0.4)], [0.5])
    assert error_indicators(surf, obs)[0] == pytest.approx(0.5)


def test_indicators_heightfield_equals_3d(rng, tensor_space):
    z = rng.normal(0, 1, tensor_space.n)
    hf = TSplineSurface.heightfield(tensor_space, z)
    P = rng.uniform(0, 1, (40, 2))
    obs = make_obs(P, rng.normal(0, 1, 40))
    e_hf = error_indicators(hf, obs)
    # same surface as explicit 3D control points over the Greville-like map
    params, phys = observation_arrays(obs)
    diff = np.abs(hf.eval(params)[:, 2] - phys[:, 2])
    np.testing.assert_allclose(e_hf, diff, atol=1e-14)


# ----------------------------------------------------------------------
# normal equations

def test_assemble_single_observation_at_corner(tensor_space):
    obs = make_obs([(0.0, 0.0)], [2.5])
    sys_ = assemble(obs, tensor_space)
    A = sys_.normal_matrix.toarray()
    # at a clamped corner the row is a single 1 at the corner anchor
    assert A[0, 0] == pytest.approx(1.0, abs=1e-11)
    assert np.abs(A).sum() == pytest.approx(1.0, abs=1e-10)
    assert sys_.rhs[0] == pytest.approx(2.5, abs=1e-10)


def test_assemble_linearity(rng, tensor_space):
    P = rng.uniform(0, 1, (30, 2))
    z = rng.normal(0, 1, 30)
    one = assemble(make_obs(P, z), tensor_space)
    two = assemble(make_obs(np.vstack([P, P]), np.concatenate([z, z])), tensor_space)
    np.testing.assert_allclose(two.normal_matrix.toarray(),
                               2 * one.normal_matrix.toarray(), atol=1e-12)
    np.testing.assert_allclose(two.rhs, 2 * one.rhs, atol=1e-12)


def test_assemble_matches_dense_oracle(rng):
    space = TSplineSpace(random_admissible_mesh(rng, nu=3, nv=3, rounds=2))
    P = rng.uniform(0, 1, (60, 2))
    z = rng.normal(0, 1, 60)
    sys_ = assemble(make_obs(P, z), space)
    Bd = space.basis_matrix(P).toarray()
    np.testing.assert_allclose(sys_.normal_matrix.toarray(), Bd.T @ Bd, atol=1e-12)
    np.testing.assert_allclose(sys_.rhs, Bd.T @ z, atol=1e-12)


def test_assemble_requires_observations(tensor_space):
    with pytest.raises(InputError):
        assemble(([], []), tensor_space)


def test_solve_constant_data(rng, tensor_space):
    P = rng.uniform(0, 1, (300, 2))
    obs = make_obs(P, np.full(300, 4.2))
    sol = solve_ls(assemble(obs, tensor_space))
    assert not sol.rank_deficient
    np.testing.assert_allclose(sol.coeffs, 4.2, atol=1e-9)


def test_solve_exact_recovery(rng):
    space = TSplineSpace(random_admissible_mesh(rng, nu=4, nv=4, rounds=2))
    z_true = rng.normal(0, 1, space.n)
    truth = TSplineSurface.heightfield(space, z_true)
    P = rng.uniform(0, 1, (2000, 2))
    obs = make_obs(P, truth.eval_z(P))
    sol = solve_ls(assemble(obs, space))
    fitted = TSplineSurface.heightfield(space, sol.coeffs)
    resid = fitted.eval_z(P) - truth.eval_z(P)
    assert np.sqrt(np.mean(resid ** 2)) <= 1e-8


def test_solve_empty_anchor_minimum_norm(rng):
    # data only in the left half: right-edge anchors have empty support
    space = TSplineSpace(TMesh.new_uniform(DOM, 4, 4))
    P = np.column_stack([rng.uniform(0.0, 0.45, 400), rng.uniform(0, 1, 400)])
    z = rng.normal(0, 1, 400)
    sys_ = assemble(make_obs(P, z), space)
    sol = solve_ls(sys_)
    assert sol.rank_deficient
    Bd = space.basis_matrix(P).toarray()
    want = np.linalg.pinv(Bd) @ z
    np.testing.assert_allclose(sol.coeffs, want, atol=1e-6)


# ----------------------------------------------------------------------
# multilevel update

def test_mta_all_within_tolerance(rng, tensor_space):
    surf = TSplineSurface.heightfield(tensor_space, np.zeros(tensor_space.n))
    P = rng.uniform(0, 1, (100, 2))
    obs = make_obs(P, rng.uniform(-0.005, 0.005, 100))
    field = mta_update(surf, obs, th=0.01)
    assert np.all(field.coeffs == 0.0)
    assert not field.active.any()


def test_mta_single_point_interpolation_identity(rng, tensor_space):
    surf = TSplineSurface.heightfield(tensor_space, np.zeros(tensor_space.n))
    p = (0.37, 0.62)
    obs = make_obs([p], [0.35])
    field = mta_update(surf, obs, th=0.01)
    updated = TSplineSurface.heightfield(tensor_space, field.coeffs)
    assert updated.eval_z(np.array([p]))[0] == pytest.approx(0.35, abs=1e-12)


def test_mta_matches_dense_oracle(rng):
    for _ in range(10):
        space = TSplineSpace(random_admissible_mesh(rng, nu=3, nv=3, rounds=1))
        base = TSplineSurface.heightfield(space, np.zeros(space.n))
        P = rng.uniform(0, 1, (50, 2))
        z = rng.normal(0, 0.2, 50)
        obs = make_obs(P, z)
        field = mta_update(base, obs, th=0.05)
        Bd = space.basis_matrix(P).toarray()
        want = dense_mta_oracle(Bd, z, th=0.05)
        np.testing.assert_allclose(field.coeffs, want, atol=1e-12)


def test_mta_zero_over_data_gaps(rng):
    space = TSplineSpace(TMesh.new_uniform(DOM, 8, 8))
    # observations only outside the central block
    P = rng.uniform(0, 1, (500, 2))
    keep = ~((P[:, 0] > 0.3) & (P[:, 0] < 0.7) & (P[:, 1] > 0.3) & (P[:, 1] < 0.7))
    P = P[keep]
    obs = make_obs(P, np.full(P.shape[0], 1.0))
    base = TSplineSurface.heightfield(space, np.zeros(space.n))
    field = mta_update(base, obs, th=0.01)
    for j, a in enumerate(space.anchors):
        if a.ku[0] >= 0.3 and a.ku[4] <= 0.7 and a.kv[0] >= 0.3 and a.kv[4] <= 0.7:
            assert field.coeffs[j] == 0.0


# ----------------------------------------------------------------------
# marking

def test_mark_nothing_above_threshold(tensor_space, rng):
    mesh = tensor_space.mesh
    P = rng.uniform(0, 1, (40, 2))
    e = np.full(40, 0.001)
    assert mark(mesh, (P, np.zeros((40, 3))), e, th=0.01, mark_count=2) == set()


def test_mark_needs_more_than_one_point():
    mesh = TMesh.new_uniform(DOM, 4, 4)
    P = np.array([[0.1, 0.1], [0.6, 0.6], [0.62, 0.61]])
    e = np.array([0.5, 0.5, 0.5])
    obs = (P, np.zeros((3, 3)))
    marked = mark(mesh, obs, e, th=0.01, mark_count=2)
    assert marked == {mesh.cell_at((0.6, 0.6))}
    # a single offending point marks nothing at the default count
    marked1 = mark(mesh, (P[:1], np.zeros((1, 3))), e[:1], th=0.01, mark_count=2)
    assert mesh.cell_at((0.1, 0.1)) not in marked1


def test_mark_count_one_degenerates_to_any_offender():
    mesh = TMesh.new_uniform(DOM, 4, 4)
    P = np.array([[0.1, 0.1]])
    e = np.array([0.5])
    marked = mark(mesh, (P, np.zeros((1, 3))), e, th=0.01, mark_count=1)
    assert marked == {mesh.cell_at((0.1, 0.1))}


# ----------------------------------------------------------------------
# driver

def test_fit_representable_data_stops_first_iteration(rng):
    cfg = FitConfig(method=Method.LS_T, max_iters=5, domain=DOM,
                    initial_nu=3, initial_nv=3)
    space = TSplineSpace(TMesh.new_uniform(DOM, 3, 3))
    truth = TSplineSurface.heightfield(space, rng.normal(0, 1, space.n))
    P = rng.uniform(0, 1, (1500, 2))
    obs = make_obs(P, truth.eval_z(P))
    result = fit(obs, cfg)
    assert len(result.reports) == 1
    assert result.reports[0].n_out == 0


def test_fit_nurbs_mesh_is_dyadic(rng):
    cfg = FitConfig(method=Method.NURBS_LS, max_iters=4, domain=DOM,
                    initial_nu=2, initial_nv=2, th=1e-9)
    P = rng.uniform(0, 1, (800, 2))
    obs = make_obs(P, np.sin(6 * P[:, 0]) + np.cos(5 * P[:, 1]))
    result = fit(obs, cfg)
    mesh = result.surface.space.mesh
    # after k iterations the mesh is the (k-1)-fold global halving
    assert len(mesh) == 4 * 2 ** 3
    levels = {c.level for c in mesh.cells}
    assert levels == {3}


def test_fit_validates_domain(rng):
    cfg = FitConfig(domain=DOM)
    obs = make_obs([(1.4, 0.2)], [0.0])
    with pytest.raises(InputError):
        fit(obs, cfg)


def test_fit_requires_observations():
    with pytest.raises(InputError):
        fit([], FitConfig(domain=DOM))


def test_fit_ls_failure_aborts_with_iteration(rng, monkeypatch):
    def boom(system):
        raise SolverError("synthetic breakdown")

    monkeypatch.setattr(fitting, "solve_ls", boom)
    cfg = FitConfig(method=Method.LS_T, max_iters=3, domain=DOM)
    obs = make_obs(rng.uniform(0, 1, (50, 2)), rng.normal(0, 1, 50))
    with pytest.raises(SolverError) as err:
        fit(obs, cfg)
    assert err.value.iteration == 1


def test_fit_mta_switches_early_on_ls_failure(rng, monkeypatch):
    calls = {"n": 0}
    real = fitting.solve_ls

    def flaky(system):
        calls["n"] += 1
        if calls["n"] == 1:
            raise SolverError("synthetic breakdown")
        return real(system)

    monkeypatch.setattr(fitting, "solve_ls", flaky)
    cfg = FitConfig(method=Method.MTA_COMBINED, max_iters=4, domain=DOM, th=0.001)
    obs = make_obs(rng.uniform(0, 1, (300, 2)), rng.normal(0, 0.05, 300))
    result = fit(obs, cfg)
    assert any("switched" in ev for ev in result.events)
    assert len(result.reports) >= 1


def test_fit_ls_rmse_monotone(rng):
    from tsfit.synthdata import DOMAIN, SurfaceKind, SyntheticSpec, sample
    obs = sample(SyntheticSpec(kind=SurfaceKind.SMOOTH, n=40, seed=2))
    cfg = FitConfig(method=Method.LS_T, max_iters=5, domain=DOMAIN)
    result = fit(obs, cfg)
    rmses = [r.rmse_noise for r in result.reports]
    assert all(b <= a + 1e-12 for a, b in zip(rmses, rmses[1:]))


def test_fit_reports_reproducible(rng):
    from tsfit.synthdata import DOMAIN, SurfaceKind, SyntheticSpec, sample
    obs = sample(SyntheticSpec(kind=SurfaceKind.SMOOTH, n=30, seed=5))
    cfg = FitConfig(method=Method.MTA_COMBINED, max_iters=5, domain=DOMAIN)
    a = fit(obs, cfg)
    b = fit(obs, cfg)
    for ra, rb in zip(a.reports, b.reports):
        assert (ra.iteration, ra.rmse_noise, ra.rmse_math, ra.maxerr,
                ra.n_out, ra.n_cp) == \
            (rb.iteration, rb.rmse_noise, rb.rmse_math, rb.maxerr,
             rb.n_out, rb.n_cp)


def test_ls_first_order_optimality(rng):
    space = TSplineSpace(TMesh.new_uniform(DOM, 3, 3))
    P = rng.uniform(0, 1, (400, 2))
    z = rng.normal(0, 1, 400)
    obs = make_obs(P, z)
    sol = solve_ls(assemble(obs, space))
    base = TSplineSurface.heightfield(space, sol.coeffs)
    sse0 = float(np.sum(error_indicators(base, obs) ** 2))
    delta = 1e-6
    for j in range(0, space.n, 5):
        for sign in (+1, -1):
            c = sol.coeffs.copy()
            c[j] += sign * delta
            sse = float(np.sum(error_indicators(
                TSplineSurface.heightfield(space, c), obs) ** 2))
            assert sse >= sse0 - 1e-12
