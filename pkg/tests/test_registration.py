"""
配准模块测试
"""
import numpy as np
import pytest

from exceptions import MonotonicityError, ValidationError
from latent_regression import krr_fit, krr_predict
from numkit import interp_eval
from pod import fit_pod, project, reconstruct
from registration import (
    RegistrationHyper,
    RegistrationMap,
    audit_monotone,
    displacement,
    fit_ot_registration,
    fit_registration,
    legendre_basis,
    map_at_times,
    map_on_grid,
    mean_shift,
    min_slope,
    ot_map_1d,
    reconstruct_registered,
    registration_objective,
    transform_manifold,
)
from snapshots import (
    AdvDiffConfig,
    Grid1D,
    SnapshotSet,
    build_snapshot_set,
    exact_solution,
    relative_l2_error,
)

HYPER = RegistrationHyper()
ADVECTION = AdvDiffConfig(c_T=4.0, c_D=0.0)


def _shift_map(t, c_T=4.0, M=HYPER.M):
    coeffs = np.zeros(M)
    coeffs[0] = c_T * t
    return RegistrationMap("legendre", float(t), 0.0, coeffs=coeffs)


def _gaussian(x, mean, width):
    return np.exp(-(x - mean) ** 2 / (2 * width ** 2))


@pytest.fixture(scope="module")
def fitted_advection():
    grid = Grid1D()
    snapshot_set = build_snapshot_set(ADVECTION, grid, 20, "advection")
    return snapshot_set, fit_registration(snapshot_set, HYPER)


class TestLegendreBasis:
    def test_constant(self, grid):
        np.testing.assert_array_equal(legendre_basis(0, grid.points, grid), 1.0)

    def test_first_order_vanishes_at_midpoint(self, grid):
        assert legendre_basis(1, 1.0, grid) == pytest.approx(0.0, abs=1e-15)
        assert legendre_basis(1, grid.x_max, grid) == pytest.approx(1.0)

    def test_orthogonal(self, grid):
        p2 = legendre_basis(2, grid.points, grid)
        p3 = legendre_basis(3, grid.points, grid)
        assert np.sum(grid.weights * p2 * p3) == pytest.approx(0.0, abs=1e-8)

    def test_outside_domain(self, grid):
        with pytest.raises(ValidationError):
            legendre_basis(1, 3.5, grid)


class TestObjective:
    def test_identity_on_reference(self, advection_set):
        u = advection_set.data[0]
        value, grad = registration_objective(np.zeros(HYPER.M), u, u, HYPER, advection_set.grid)
        assert value == pytest.approx(0.0, abs=1e-20)
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_node_aligned_shift_has_zero_misfit(self, grid):
        t = 16 * grid.dx / ADVECTION.c_T
        u_t = exact_solution(ADVECTION, grid.points, t)
        u_ref = exact_solution(ADVECTION, grid.points, 0.0)
        value, _ = registration_objective(_shift_map(t).coeffs, u_t, u_ref, HYPER, grid)
        assert value < 1e-20

    def test_exact_shift_below_interpolation_floor(self, grid):
        u_t = exact_solution(ADVECTION, grid.points, 0.1)
        u_ref = exact_solution(ADVECTION, grid.points, 0.0)
        value, _ = registration_objective(_shift_map(0.1).coeffs, u_t, u_ref, HYPER, grid)
        assert value < 1e-8

    @staticmethod
    def _check_gradient(snapshot_set, a):
        grid = snapshot_set.grid
        u_t, u_ref = snapshot_set.data[1], snapshot_set.data[0]
        _, grad = registration_objective(a, u_t, u_ref, HYPER, grid)
        h = 1e-6
        fd = np.zeros_like(a)
        for m in range(a.size):
            e = np.zeros_like(a)
            e[m] = h
            fd[m] = (registration_objective(a + e, u_t, u_ref, HYPER, grid)[0]
                     - registration_objective(a - e, u_t, u_ref, HYPER, grid)[0]) / (2 * h)
        assert np.linalg.norm(fd - grad) / np.linalg.norm(grad) < 1e-5

    @pytest.mark.parametrize("case", ["advection_set", "diffusion_set", "advection_diffusion_set"])
    @pytest.mark.parametrize("seed", range(10))
    def test_gradient_matches_finite_differences(self, request, case, seed):
        a = 0.02 * np.random.default_rng(seed).standard_normal(HYPER.M)
        self._check_gradient(request.getfixturevalue(case), a)

    def test_gradient_with_active_penalty(self, advection_set):
        a = np.array([0.0, -1.7, 0.0, 0.0, 0.0, 0.0])
        self._check_gradient(advection_set, a)

    def test_wrong_length(self, advection_set):
        u = advection_set.data[0]
        with pytest.raises(ValidationError):
            registration_objective(np.zeros(3), u, u, HYPER, advection_set.grid)


class TestFitRegistration:
    def test_reference_map_is_identity(self, fitted_advection):
        _, maps = fitted_advection
        np.testing.assert_array_equal(maps[0].coeffs, 0.0)

    def test_recovers_shift(self, fitted_advection):
        snapshot_set, maps = fitted_advection
        u_ref = snapshot_set.data[0]
        for t, reg_map in zip(snapshot_set.times, maps):
            assert mean_shift(reg_map, u_ref, snapshot_set.grid) == pytest.approx(4.0 * t, abs=1e-3)

    def test_descent_history_non_increasing(self, fitted_advection):
        _, maps = fitted_advection
        for reg_map in maps[1:]:
            history = np.array(reg_map.diagnostics.history)
            assert np.all(np.diff(history) <= 1e-12 * max(history[0], 1e-300))

    def test_maps_monotone(self, fitted_advection):
        snapshot_set, maps = fitted_advection
        for reg_map in maps:
            assert min_slope(reg_map, snapshot_set.grid) > HYPER.min_slope
            assert np.all(np.diff(map_on_grid(reg_map, snapshot_set.grid)) > 0)

    def test_transformed_manifold_is_nearly_rank_one(self, fitted_advection):
        snapshot_set, maps = fitted_advection
        transformed = transform_manifold(snapshot_set, maps)
        w = snapshot_set.grid.weights
        second_moment = transformed.data @ (w[:, None] * transformed.data.T)
        lam = np.sort(np.linalg.eigvalsh(second_moment))[::-1]
        assert lam[1] / lam[0] < 1e-6

    def test_beats_pod_at_two_modes(self, fitted_advection):
        snapshot_set, maps = fitted_advection
        grid = snapshot_set.grid
        test_times = np.linspace(0.0, ADVECTION.T_final, 50)
        truth = np.vstack([exact_solution(ADVECTION, grid.points, t) for t in test_times])
        N = 2

        basis = fit_pod(snapshot_set)
        Z = krr_predict(krr_fit(snapshot_set.times, project(basis, snapshot_set.data, N)), test_times)
        pod_error = relative_l2_error(truth, reconstruct(basis, Z), grid).mean()

        transformed = transform_manifold(snapshot_set, maps)
        reg_basis = fit_pod(transformed)
        Z_reg = krr_predict(krr_fit(transformed.times, project(reg_basis, transformed.data, N)),
                            test_times)
        test_maps = map_at_times(maps, test_times)
        recon = np.vstack([reconstruct_registered(reg_basis, m, z, grid)
                           for m, z in zip(test_maps, Z_reg)])
        reg_error = relative_l2_error(truth, recon, grid).mean()
        assert reg_error < pod_error

    def test_ref_time_must_be_a_snapshot(self, advection_set):
        with pytest.raises(ValidationError):
            fit_registration(advection_set, HYPER, ref_t=0.01)


class TestTransformManifold:
    def test_identity_maps_leave_set_unchanged(self, advection_set):
        maps = [_shift_map(t, c_T=0.0) for t in advection_set.times]
        transformed = transform_manifold(advection_set, maps)
        np.testing.assert_allclose(transformed.data, advection_set.data, rtol=0, atol=1e-14)

    def test_node_aligned_shifts_collapse_to_first_row(self, grid):
        times = 2 * grid.dx * np.arange(6)
        data = np.vstack([exact_solution(ADVECTION, grid.points, t) for t in times])
        snapshot_set = SnapshotSet(grid, times, data, "advection", ADVECTION)
        transformed = transform_manifold(snapshot_set, [_shift_map(t) for t in times])
        np.testing.assert_allclose(transformed.data, np.tile(data[0], (6, 1)), rtol=0, atol=1e-12)

    def test_exact_shifts_collapse_up_to_interpolation(self, advection_set):
        maps = [_shift_map(t) for t in advection_set.times]
        transformed = transform_manifold(advection_set, maps)
        assert np.max(np.abs(transformed.data - advection_set.data[0])) < 1e-4

    def test_count_mismatch(self, advection_set):
        with pytest.raises(ValidationError):
            transform_manifold(advection_set, [_shift_map(0.0)])


class TestReconstructRegistered:
    def test_identity_map_equals_pod(self, advection_set):
        basis = fit_pod(advection_set)
        z = project(basis, advection_set.data[5], 3)
        out = reconstruct_registered(basis, _shift_map(0.0, c_T=0.0), z, advection_set.grid)
        np.testing.assert_allclose(out, reconstruct(basis, z), rtol=0, atol=1e-12)

    def test_one_mode_with_exact_shifts(self, advection_set):
        grid = advection_set.grid
        transformed = transform_manifold(advection_set, [_shift_map(t) for t in advection_set.times])
        basis = fit_pod(transformed)
        ts = advection_set.times
        model = krr_fit(ts, project(basis, transformed.data, 1))
        test_times = np.linspace(0.0, ADVECTION.T_final, 31)
        Z = krr_predict(model, test_times)
        truth = np.vstack([exact_solution(ADVECTION, grid.points, t) for t in test_times])
        recon = np.vstack([reconstruct_registered(basis, _shift_map(t), z, grid)
                           for t, z in zip(test_times, Z)])
        assert relative_l2_error(truth, recon, grid).mean() < 1e-3

    def test_non_monotone_map_rejected(self, advection_set):
        basis = fit_pod(advection_set)
        bad = RegistrationMap("legendre", 0.1, 0.0, coeffs=np.array([0.0, -3.0, 0, 0, 0, 0]))
        with pytest.raises(MonotonicityError):
            reconstruct_registered(basis, bad, np.zeros(2), advection_set.grid)


def test_audit_flags_folding_map(grid):
    bad = RegistrationMap("legendre", 0.1, 0.0, coeffs=np.array([0.0, -3.0, 0, 0, 0, 0]))
    with pytest.raises(MonotonicityError):
        audit_monotone(bad, grid, HYPER)


class TestOptimalTransport:
    def test_identical_densities_give_identity(self, grid):
        u = _gaussian(grid.points, 0.5, 0.2)
        reg_map = ot_map_1d(u, u, grid)
        np.testing.assert_allclose(reg_map.ot_map_on_grid, grid.points, rtol=0, atol=1e-8)
        np.testing.assert_allclose(reg_map.ot_inverse_on_grid, grid.points, rtol=0, atol=1e-8)

    def test_translation(self):
        grid = Grid1D(n_points=1024)
        x = grid.points
        reg_map = ot_map_1d(_gaussian(x, 0.0, 0.1), _gaussian(x, 0.5, 0.1), grid)
        bulk = np.abs(x) <= 0.2
        np.testing.assert_allclose(reg_map.ot_map_on_grid[bulk], x[bulk] + 0.5, rtol=0, atol=1e-4)

    def test_scaling(self):
        grid = Grid1D(n_points=1024)
        x = grid.points
        reg_map = ot_map_1d(_gaussian(x, 0.0, 0.1), _gaussian(x, 0.0, 0.2), grid)
        bulk = np.abs(x) <= 0.2
        np.testing.assert_allclose(reg_map.ot_map_on_grid[bulk], 2.0 * x[bulk], rtol=0, atol=1e-3)

    def test_map_composed_with_inverse_is_identity(self):
        grid = Grid1D(n_points=1024)
        x = grid.points
        reg_map = ot_map_1d(_gaussian(x, 0.0, 0.1), _gaussian(x, 0.5, 0.1), grid)
        composed = interp_eval(x, reg_map.ot_map_on_grid, reg_map.ot_inverse_on_grid, "pchip")
        bulk = np.abs(x - 0.5) <= 0.2
        np.testing.assert_allclose(composed[bulk], x[bulk], rtol=0, atol=1e-6)

    def test_negative_density_rejected(self, grid):
        u = _gaussian(grid.points, 0.0, 0.1)
        with pytest.raises(ValidationError):
            ot_map_1d(u - 0.5, u, grid)

    def test_fit_ot_registration(self, advection_set):
        maps = fit_ot_registration(advection_set)
        assert len(maps) == advection_set.n_snapshots
        np.testing.assert_allclose(map_on_grid(maps[0], advection_set.grid),
                                   advection_set.grid.points, atol=1e-8)


def test_map_at_times_interpolates_training_coefficients(advection_set):
    maps = [_shift_map(t) for t in advection_set.times]
    predicted = map_at_times(maps, advection_set.times[[3, 11]])
    np.testing.assert_allclose(predicted[0].coeffs[0], 4.0 * advection_set.times[3], atol=1e-6)
    np.testing.assert_allclose(predicted[1].coeffs[1:], 0.0, atol=1e-12)


def test_displacement_of_shift_map(grid):
    np.testing.assert_allclose(displacement(_shift_map(0.1), grid), 0.4, atol=1e-14)
