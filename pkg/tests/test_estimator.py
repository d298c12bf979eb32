"""System assembly, least squares, HKB ridge, and order selection.

The HKB oracle here deliberately uses explicit dense inverses (no
factorization shortcuts) so it stays an independent check on the
implementation's factorized route.
"""

import numpy as np
import pytest

from monotraj import (
    DegenerateGeometryError,
    InsufficientDofError,
    InvalidInputError,
    MonotrajError,
    Observation,
    PolynomialTrajectory,
    RankDeficientError,
    StackedSystem,
    TargetMotion,
    TooFewObservationsError,
    assemble_system,
    design_block,
    eval_trajectory,
    generate_scenario,
    hkb_ridge_parameter,
    min_observations,
    ray_direction_errors,
    residual_projector,
    ridge_solution,
    select_order,
    solve_least_squares,
    solve_ridge,
)
from monotraj.estimator import _least_squares_beta

from conftest import circle_scenario, observations_from_paths


def small_random_system(rng, order=None, n=None, noise=1e-3, normalize_time=False):
    """Random full-rank system: scattered cameras watching a random polynomial
    target, rays perturbed by small random rotations.

    N is drawn strictly above the minimum so the residual never degenerates
    to an exact interpolation (2N = 3(K+1) leaves nothing to estimate the
    residual variance from)."""
    k = int(rng.integers(0, 3)) if order is None else order
    n = int(rng.integers(min_observations(k) + 1, 9)) if n is None else n
    times = np.sort(rng.uniform(0.0, 2.0, n))
    while np.unique(times).size != n:
        times = np.sort(rng.uniform(0.0, 2.0, n))
    centers = rng.uniform(-50.0, 50.0, (n, 3))
    coeffs = rng.uniform(-5.0, 5.0, (3, k + 1))
    targets = eval_trajectory(PolynomialTrajectory(coeffs), times)
    diffs = targets - centers
    rays = diffs / np.linalg.norm(diffs, axis=1)[:, None]
    if noise:
        perturb = rng.normal(0.0, noise, (n, 3))
        rays = rays + perturb
        rays /= np.linalg.norm(rays, axis=1)[:, None]
    obs = [Observation(t, c, r) for t, c, r in zip(times, centers, rays)]
    return assemble_system(obs, k, normalize_time=normalize_time), coeffs, obs


def hkb_oracle(system: StackedSystem) -> float:
    """Dense-arithmetic ridge parameter: explicit projector and inverses."""
    a, b = system.a_matrix, system.b_vector
    n, t = a.shape
    ata_inv = np.linalg.inv(a.T @ a)
    projector = np.eye(n) - a @ ata_inv @ a.T
    delta0 = float(b @ projector @ b) / (n - t)
    beta = ata_inv @ (a.T @ b)
    energy = float(beta @ (a.T @ a) @ beta) / system.n_observations
    return t * delta0 / energy


class TestAssembleSystem:
    def test_single_observation_order_zero_structure(self):
        # with one basis function t^0 = 1 the block is just the projector
        ray = np.array([0.0, 0.6, 0.8])
        center = np.array([1.0, 2.0, 3.0])
        obs = [Observation(0.5, center, ray)]
        system = assemble_system(obs, 0, allow_underdetermined=True)
        v = residual_projector(ray).matrix
        np.testing.assert_allclose(system.a_matrix, v, atol=1e-15)
        np.testing.assert_allclose(system.b_vector, v @ center, atol=1e-15)

    def test_reassembly_from_observations(self, linear_noise_free):
        obs, _, _ = linear_noise_free
        system = assemble_system(obs, 2, normalize_time=False)
        for i, o in enumerate(obs):
            v = residual_projector(o.ray).matrix
            block = v @ design_block(2, o.time).matrix
            np.testing.assert_allclose(system.a_matrix[3 * i : 3 * i + 3], block, atol=1e-12)
            np.testing.assert_allclose(
                system.b_vector[3 * i : 3 * i + 3], v @ o.camera_center, atol=1e-12
            )

    def test_three_observations_order_one_full_rank(self):
        # rays from a known linear trajectory, cameras well spread
        times = np.array([0.0, 3.0, 6.0])
        spec = circle_scenario(duration=6.0, frame_rate=1.0 / 3.0)
        obs, _, _ = generate_scenario(spec)
        assert [o.time for o in obs] == list(times)
        system = assemble_system(obs, 1)
        assert system.design_rank == 6

    def test_concurrent_rays_rank_deficient(self):
        # all rays concurrent at the static camera center: any trajectory of
        # the family C + lambda (P(t) - C) solves the system, so the rank
        # drops for every order that can represent a moving solution
        times = np.linspace(0.0, 1.0, 8)
        center = np.array([0.0, 0.0, 100.0])
        targets = np.stack([10 + 5 * times, 5 * times, times], axis=1)
        obs = observations_from_paths(times, np.tile(center, (8, 1)), targets)
        for k in (1, 2):
            system = assemble_system(obs, k)
            assert system.design_rank < 3 * (k + 1)
        # order 0 with a single repeated ray: rank of one projector is 2
        same_ray = observations_from_paths(
            times[:4], np.tile(center, (4, 1)), np.tile([0.0, 0.0, 0.0], (4, 1))
        )
        system = assemble_system(same_ray, 0)
        assert system.design_rank == 2 < 3

    def test_too_few_observations(self):
        obs = [
            Observation(0.0, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
            Observation(1.0, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
        ]
        with pytest.raises(TooFewObservationsError) as err:
            assemble_system(obs, 1)
        assert err.value.required == 3
        assert err.value.got == 2

    def test_duplicate_times_rejected(self):
        obs = [
            Observation(0.0, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
            Observation(0.0, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
        ]
        with pytest.raises(InvalidInputError):
            assemble_system(obs, 0)

    def test_time_normalization_is_pure_reparameterization(self, linear_noise_free):
        obs, _, _ = linear_noise_free
        raw = solve_least_squares(assemble_system(obs, 1, normalize_time=False))
        normalized = solve_least_squares(assemble_system(obs, 1, normalize_time=True))
        np.testing.assert_allclose(
            raw.trajectory.coeffs, normalized.trajectory.coeffs, rtol=1e-9, atol=1e-9
        )


class TestLeastSquares:
    def test_two_ray_triangulation(self):
        # constant target seen along two non-parallel rays: classic intersection
        point = np.array([1.0, 2.0, 3.0])
        centers = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
        obs = observations_from_paths([0.0, 1.0], centers, np.tile(point, (2, 1)))
        report = solve_least_squares(assemble_system(obs, 0))
        np.testing.assert_allclose(report.trajectory.coeffs[:, 0], point, atol=1e-10)

    def test_linear_scenario_exact_recovery(self):
        # ten noise-free sightings spread over the full window
        spec = circle_scenario(duration=6.0, frame_rate=1.5)
        obs, _, _ = generate_scenario(spec)
        obs = obs[::1][:10]
        report = solve_least_squares(assemble_system(obs, 1))
        expected = TargetMotion.linear().coeffs
        np.testing.assert_allclose(report.trajectory.coeffs, expected, atol=1e-8 * 10)

    def test_normal_equation_optimality(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            system, _, _ = small_random_system(rng, order=2, n=8)
            beta, _ = _least_squares_beta(system)
            gradient = system.a_matrix.T @ (system.a_matrix @ beta - system.b_vector)
            rhs_scale = np.linalg.norm(system.a_matrix.T @ system.b_vector)
            assert np.linalg.norm(gradient) <= 1e-8 * rhs_scale

    def test_rank_deficient_raises_with_rank(self):
        # static camera: depth along the rays is unobservable
        times = np.linspace(0.0, 1.0, 6)
        center = np.array([0.0, 0.0, 100.0])
        targets = np.stack([10 + 5 * times, 5 * times, times], axis=1)
        obs = observations_from_paths(times, np.tile(center, (6, 1)), targets)
        system = assemble_system(obs, 1)
        with pytest.raises(RankDeficientError) as err:
            solve_least_squares(system)
        assert err.value.rank == system.design_rank
        assert err.value.rank < 6

    def test_residual_reported(self):
        rng = np.random.default_rng(5)
        system, _, _ = small_random_system(rng, order=1, n=6, noise=1e-2)
        report = solve_least_squares(system)
        beta, _ = _least_squares_beta(system)
        expected = np.linalg.norm(system.a_matrix @ beta - system.b_vector)
        assert report.residual_norm == pytest.approx(expected, rel=1e-12)
        assert report.ridge_param == 0.0
        assert report.method == "least_squares"


class TestNoiseFreeExactness:
    @pytest.mark.parametrize("order", [0, 1, 2, 3])
    def test_random_polynomial_targets(self, order):
        # circle camera is not polynomial, rays share no common point
        rng = np.random.default_rng(100 + order)
        for _ in range(5):
            coeffs = rng.uniform(-3.0, 3.0, (3, order + 1))
            target = TargetMotion.polynomial(coeffs)
            n = max(min_observations(order), order + 2, 3)
            spec = circle_scenario(target=target, duration=6.0, frame_rate=(n - 1) / 6.0)
            obs, _, _ = generate_scenario(spec)
            scale = max(1.0, np.max(np.abs(coeffs)))
            ls = solve_least_squares(assemble_system(obs, order))
            np.testing.assert_allclose(ls.trajectory.coeffs, coeffs, atol=1e-8 * scale)
            ridge = solve_ridge(assemble_system(obs, order))
            np.testing.assert_allclose(ridge.trajectory.coeffs, coeffs, atol=1e-8 * scale)


class TestHkbRidgeParameter:
    def test_noise_free_parameter_is_numerically_zero(self, linear_noise_free):
        obs, _, _ = linear_noise_free
        system = assemble_system(obs, 1)
        beta, _ = _least_squares_beta(system)
        r = hkb_ridge_parameter(system, beta)
        # exact fit: residual variance is zero up to rounding
        assert 0.0 <= r < 1e-20

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            system, _, _ = small_random_system(rng, noise=1e-2)
            beta, _ = _least_squares_beta(system)
            r = hkb_ridge_parameter(system, beta)
            assert r > 0.0
            assert r == pytest.approx(hkb_oracle(system), rel=1e-8)

    def test_rhs_scaling_invariance(self):
        # B -> 2B scales residual variance and fitted energy by 4: r unchanged
        rng = np.random.default_rng(22)
        system, _, _ = small_random_system(rng, order=1, n=7, noise=1e-2)
        beta, _ = _least_squares_beta(system)
        r1 = hkb_ridge_parameter(system, beta)
        import dataclasses

        doubled = dataclasses.replace(system, b_vector=2.0 * system.b_vector)
        beta2, _ = _least_squares_beta(doubled)
        r2 = hkb_ridge_parameter(doubled, beta2)
        assert r2 == pytest.approx(r1, rel=1e-10)

    def test_insufficient_dof(self):
        # 3N == 3(K+1) leaves no residual degrees of freedom
        rng = np.random.default_rng(23)
        system, _, _ = small_random_system(rng, order=1, n=6, noise=1e-2)
        import dataclasses

        trimmed = dataclasses.replace(
            system,
            a_matrix=system.a_matrix[:6],
            b_vector=system.b_vector[:6],
            times=system.times[:2],
            camera_centers=system.camera_centers[:2],
            rays=system.rays[:2],
        )
        beta = np.zeros(6)
        with pytest.raises(InsufficientDofError):
            hkb_ridge_parameter(trimmed, beta)

    def test_zero_solution_rejected(self):
        rng = np.random.default_rng(24)
        system, _, _ = small_random_system(rng, order=0, n=4, noise=1e-2)
        with pytest.raises(DegenerateGeometryError):
            hkb_ridge_parameter(system, np.zeros(system.n_columns))

    def test_bad_shape_rejected(self):
        rng = np.random.default_rng(25)
        system, _, _ = small_random_system(rng, order=1, n=6)
        with pytest.raises(InvalidInputError):
            hkb_ridge_parameter(system, np.zeros(5))


class TestRidge:
    def test_zero_parameter_equals_least_squares(self, linear_noise_free):
        obs, _, _ = linear_noise_free
        system = assemble_system(obs, 1)
        ls = solve_least_squares(system)
        beta, _ = ridge_solution(system, 0.0)
        np.testing.assert_allclose(
            beta.reshape(3, 2),
            np.array(
                [[c for c in row] for row in
                 assemble_and_normalize(ls.trajectory.coeffs, system)]
            ),
            atol=1e-10,
        )

    def test_noise_free_ridge_matches_least_squares(self, linear_noise_free):
        obs, _, _ = linear_noise_free
        system = assemble_system(obs, 1)
        ls = solve_least_squares(system)
        ridge = solve_ridge(system)
        np.testing.assert_allclose(
            ridge.trajectory.coeffs, ls.trajectory.coeffs, atol=1e-10
        )

    def test_solution_matches_dense_normal_equations(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            system, _, _ = small_random_system(rng, noise=1e-2)
            beta_ls, _ = _least_squares_beta(system)
            r = hkb_ridge_parameter(system, beta_ls)
            beta, _ = ridge_solution(system, r)
            a = system.a_matrix
            dense = np.linalg.inv(a.T @ a + r * np.eye(system.n_columns)) @ (
                a.T @ system.b_vector
            )
            np.testing.assert_allclose(beta, dense, rtol=1e-8, atol=1e-12)

    def test_ridge_optimality_identity(self):
        rng = np.random.default_rng(32)
        for _ in range(5):
            system, _, _ = small_random_system(rng, noise=1e-2)
            beta_ls, _ = _least_squares_beta(system)
            r = hkb_ridge_parameter(system, beta_ls)
            beta, _ = ridge_solution(system, r)
            a = system.a_matrix
            lhs = (a.T @ a + r * np.eye(system.n_columns)) @ beta
            rhs = a.T @ system.b_vector
            assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)

    def test_shrinkage(self):
        rng = np.random.default_rng(33)
        for _ in range(10):
            system, _, _ = small_random_system(rng, noise=1e-2)
            beta_ls, _ = _least_squares_beta(system)
            r = hkb_ridge_parameter(system, beta_ls)
            beta_r, _ = ridge_solution(system, r)
            assert np.linalg.norm(beta_r) <= np.linalg.norm(beta_ls) * (1 + 1e-12)

    def test_monotone_shrinkage_sweep(self):
        rng = np.random.default_rng(34)
        for _ in range(5):
            system, _, _ = small_random_system(rng, noise=1e-2)
            norms = []
            for r in np.logspace(-8, 4, 25):
                beta, _ = ridge_solution(system, r)
                norms.append(np.linalg.norm(beta))
            diffs = np.diff(norms)
            assert np.all(diffs <= 1e-9 * (1.0 + np.abs(norms[:-1])))

    def test_paper_literal_mode_differs(self):
        rng = np.random.default_rng(35)
        system, _, _ = small_random_system(rng, order=1, n=8, noise=5e-2)
        default = solve_ridge(system)
        literal = solve_ridge(system, paper_literal=True)
        assert literal.paper_literal_ridge
        assert literal.ridge_param == pytest.approx(default.ridge_param)
        # the subtractive regularizer moves the solution the other way
        assert not np.allclose(default.trajectory.coeffs, literal.trajectory.coeffs)

    def test_negative_parameter_rejected(self):
        rng = np.random.default_rng(36)
        system, _, _ = small_random_system(rng, order=0, n=4)
        with pytest.raises(InvalidInputError):
            ridge_solution(system, -1.0)


def assemble_and_normalize(coeffs, system):
    """Map raw-time coefficients into the system's normalized parameterization."""
    from monotraj import rescale_coefficients

    # p(t) = q((t - offset)/scale): recover q's coefficients from p's
    return rescale_coefficients(coeffs, -system.time_offset / system.time_scale,
                                1.0 / system.time_scale)


class TestSelectOrder:
    def test_noise_free_linear_picks_one(self, linear_noise_free):
        obs, _, _ = linear_noise_free
        report = select_order(obs)
        assert report.order_selected == 1
        assert report.candidate_objectives[1] < 1e-9
        assert report.candidate_objectives[2] < 1e-9
        assert report.candidate_objectives[3] < 1e-9

    def test_noise_free_accelerated_picks_two(self, accelerated_noise_free):
        obs, _, _ = accelerated_noise_free
        report = select_order(obs)
        assert report.order_selected == 2

    def test_candidates_needing_more_observations_are_skipped(self):
        spec = circle_scenario(duration=6.0, frame_rate=0.5)  # 4 observations
        obs, _, _ = generate_scenario(spec)
        report = select_order(obs, candidate_orders=(0, 1, 2, 3))
        assert report.skipped_orders == {2: "too-few-observations", 3: "too-few-observations"}
        assert report.order_selected == 1

    def test_all_candidates_unsolvable(self):
        spec = circle_scenario(duration=6.0, frame_rate=1.0 / 3.0)  # 3 observations
        obs, _, _ = generate_scenario(spec)
        with pytest.raises(TooFewObservationsError):
            select_order(obs, candidate_orders=(2, 3))

    def test_estimate_through_camera_center_disqualifies(self):
        # two rays meeting exactly at a third observation's camera center
        point = np.zeros(3)
        centers = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        obs = observations_from_paths([0.0, 1.0, 2.0], centers, np.tile(point, (3, 1)))
        # drop the third sighting's ray onto a line through its own center
        bad = Observation(3.0, point, np.array([0.0, 0.0, 1.0]))
        with pytest.raises(MonotrajError):
            select_order([*obs, bad], candidate_orders=(0,))

    def test_objective_rotation_invariance(self):
        # rotating rays, centers, and truth together leaves objectives unchanged
        rng = np.random.default_rng(41)
        spec = circle_scenario(duration=3.0)
        obs, _, _ = generate_scenario(spec)
        from monotraj import NoiseSpec, apply_noise

        noisy = apply_noise(obs, NoiseSpec.high(), seed=5)
        report = select_order(noisy, method="least_squares")

        theta = rng.uniform(0, 2 * np.pi)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        kmat = np.array(
            [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
        )
        q = np.eye(3) + np.sin(theta) * kmat + (1 - np.cos(theta)) * kmat @ kmat
        rotated = [
            Observation(o.time, q @ o.camera_center, q @ o.ray) for o in noisy
        ]
        rotated_report = select_order(rotated, method="least_squares")
        assert rotated_report.order_selected == report.order_selected
        for k in report.candidate_objectives:
            assert rotated_report.candidate_objectives[k] == pytest.approx(
                report.candidate_objectives[k], rel=1e-7
            )

    def test_empty_candidates_rejected(self, linear_noise_free):
        obs, _, _ = linear_noise_free
        with pytest.raises(InvalidInputError):
            select_order(obs, candidate_orders=())

    def test_ray_direction_errors_match_report(self, linear_noise_free):
        obs, _, _ = linear_noise_free
        report = solve_least_squares(assemble_system(obs, 1))
        errors = ray_direction_errors(report.trajectory, obs)
        np.testing.assert_allclose(errors, report.per_time_ray_error, atol=1e-15)
        assert report.objective == pytest.approx(float(errors @ errors))
