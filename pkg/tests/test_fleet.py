import numpy as np
import pytest
from scipy.stats import chi2

import scenario_ddc as sd
from scenario_ddc.errors import DataValidationError, RolloutOverflowError
from scenario_ddc.fleet import trajectory_seed


class TestBenchmarkFleet:
    def test_mean_matrices(self):
        dist = sd.default_benchmark_fleet(0.01)
        A, B = dist.unpack(dist.mu)
        assert A[0, 0] == 1.01
        np.testing.assert_allclose(A, [[1.01, 0.01, 0.0], [0.01, 1.01, 0.01], [0.0, 0.01, 1.01]])
        np.testing.assert_allclose(B, np.eye(3))

    def test_covariance_structure(self):
        sigma2 = 0.04
        dist = sd.default_benchmark_fleet(sigma2)
        np.testing.assert_allclose(np.diag(dist.Sigma), sigma2 * np.ones(18))
        off = dist.Sigma[~np.eye(18, dtype=bool)]
        np.testing.assert_allclose(off, 0.5 * sigma2 * np.ones(off.size))
        assert dist.mass == 0.95

    def test_vec_convention_is_column_major(self):
        dist = sd.default_benchmark_fleet(0.01)
        # entry order: A column 0 first => mu[1] is A[1,0] = 0.01
        assert dist.mu[0] == 1.01
        assert dist.mu[1] == 0.01
        assert dist.mu[2] == 0.0


class TestSampleSystem:
    def test_degenerate_limit_returns_mean(self, rng):
        dist = sd.default_benchmark_fleet(1e-32)
        for i in range(10):
            s = sd.sample_system(dist, rng, draw_index=i)
            A_mean, B_mean = dist.unpack(dist.mu)
            assert np.max(np.abs(s.A - A_mean)) < 1e-12
            assert np.max(np.abs(s.B - B_mean)) < 1e-12
            assert s.draw_index == i

    def test_every_sample_inside_level_set(self, rng):
        dist = sd.default_benchmark_fleet(0.05)
        Sigma_inv = np.linalg.inv(dist.Sigma)
        r2 = dist.mahalanobis_radius2()
        for _ in range(200):
            s = sd.sample_system(dist, rng)
            theta = np.concatenate([s.A, s.B], axis=1).flatten(order="F")
            d = theta - dist.mu
            assert d @ Sigma_inv @ d <= r2 * (1 + 1e-9)

    def test_acceptance_rate_matches_mass(self, rng):
        # the acceptance event is ||z||^2 <= chi2 quantile for standard z
        dist = sd.default_benchmark_fleet(0.01)
        r2 = dist.mahalanobis_radius2()
        assert chi2.cdf(r2, 18) == pytest.approx(0.95, abs=1e-12)
        z = rng.standard_normal((100_000, 18))
        rate = np.mean(np.sum(z**2, axis=1) <= r2)
        assert rate == pytest.approx(0.95, abs=0.01)

    def test_empirical_mean_centered(self):
        rng = np.random.default_rng(10)
        dist = sd.default_benchmark_fleet(0.01)
        n = 20_000
        draws = np.empty((n, 18))
        for i in range(n):
            s = sd.sample_system(dist, rng)
            draws[i] = np.concatenate([s.A, s.B], axis=1).flatten(order="F")
        se = draws.std(axis=0) / np.sqrt(n)
        assert np.all(np.abs(draws.mean(axis=0) - dist.mu) <= 4 * se + 1e-12)

    def test_box_truncation_alternative(self, rng):
        dist = sd.default_benchmark_fleet(0.01, truncation="box")
        half = dist.box_halfwidth_multiplier() * np.sqrt(np.diag(dist.Sigma))
        for _ in range(100):
            s = sd.sample_system(dist, rng)
            theta = np.concatenate([s.A, s.B], axis=1).flatten(order="F")
            assert np.all(np.abs(theta - dist.mu) <= half * (1 + 1e-12))

    def test_singular_covariance_pins_null_directions(self, rng):
        mu = np.zeros(2)
        Sigma = np.array([[1.0, 0.0], [0.0, 0.0]])
        dist = sd.FleetDistribution(mu=mu, Sigma=Sigma, nx=1, nu=1)
        for _ in range(20):
            s = sd.sample_system(dist, rng)
            assert s.B[0, 0] == 0.0  # second vec component is pinned


class TestSampleNoise:
    def test_zero_bound(self, rng):
        for _ in range(5):
            np.testing.assert_array_equal(sd.sample_noise(0.0, 3, rng), np.zeros(3))

    def test_bound_never_violated(self, rng):
        wbar = 0.015
        for nx in (1, 2, 3):
            sq = np.array([
                np.sum(sd.sample_noise(wbar, nx, rng) ** 2) for _ in range(30_000)
            ])
            assert np.max(sq) <= wbar * (1 + 1e-12)

    def test_scalar_mean_square_is_third_of_bound(self):
        rng = np.random.default_rng(5)
        wbar = 0.015
        sq = np.array([sd.sample_noise(wbar, 1, rng)[0] ** 2 for _ in range(100_000)])
        assert np.mean(sq) == pytest.approx(wbar / 3, rel=0.01)


class TestSimulateTrajectory:
    def test_deterministic_recursion(self, rng):
        theta = sd.SystemSample(A=np.array([[1.0]]), B=np.array([[1.0]]))
        cfg = sd.RolloutConfig(
            M=2, wbar=0.0,
            input_law=sd.FixedLaw([1.0]),
            x0_law=sd.FixedLaw([0.0]),
        )
        traj = sd.simulate_trajectory(theta, cfg, rng)
        np.testing.assert_allclose(traj.states.ravel(), [0.0, 1.0, 2.0])

    def test_annihilating_dynamics(self, rng):
        theta = sd.SystemSample(A=np.zeros((2, 2)), B=np.zeros((2, 1)))
        cfg = sd.RolloutConfig(M=4, wbar=0.0)
        traj = sd.simulate_trajectory(theta, cfg, rng)
        np.testing.assert_array_equal(traj.states[1:], np.zeros((4, 2)))

    def test_residuals_reproduce_drawn_noise(self):
        # replicate the documented draw order with an identical generator
        theta = sd.SystemSample(A=0.8 * np.eye(2), B=np.ones((2, 1)))
        cfg = sd.RolloutConfig(M=6, wbar=0.02)
        traj = sd.simulate_trajectory(theta, cfg, np.random.default_rng(99))
        shadow = np.random.default_rng(99)
        cfg.x0_law.draw(shadow, 2)
        noises = []
        for _ in range(6):
            cfg.input_law.draw(shadow, 1)
            noises.append(sd.sample_noise(cfg.wbar, 2, shadow))
        dm = sd.build_data_matrices(traj)
        resid = dm.Xplus - theta.A @ dm.X - theta.B @ dm.U
        np.testing.assert_allclose(resid, np.column_stack(noises), atol=1e-14)

    def test_overflow_raises(self, rng):
        theta = sd.SystemSample(A=np.array([[2.0]]), B=np.array([[0.0]]))
        cfg = sd.RolloutConfig(
            M=60, wbar=0.0, x0_law=sd.FixedLaw([1.0]),
        )
        with pytest.raises(RolloutOverflowError):
            sd.simulate_trajectory(theta, cfg, rng)

    def test_records_trailing_input(self, rng):
        theta = sd.SystemSample(A=np.array([[0.5]]), B=np.array([[1.0]]))
        traj = sd.simulate_trajectory(theta, sd.RolloutConfig(M=3, wbar=0.0), rng)
        assert traj.inputs.shape == (4, 1)


class TestGenerateDataset:
    def test_bit_identical_reruns(self):
        dist = sd.default_benchmark_fleet(0.01)
        cfg = sd.RolloutConfig(M=10, wbar=0.015)
        t1 = sd.generate_dataset(dist, 4, cfg, master_seed=7)
        t2 = sd.generate_dataset(dist, 4, cfg, master_seed=7)
        for a, b in zip(t1, t2):
            np.testing.assert_array_equal(a.states, b.states)
            np.testing.assert_array_equal(a.inputs, b.inputs)
            assert a.seed == b.seed

    def test_residual_energy_bounded(self):
        dist = sd.default_benchmark_fleet(0.01)
        cfg = sd.RolloutConfig(M=20, wbar=0.015)
        trajectories, systems = sd.generate_dataset(
            dist, 5, cfg, master_seed=3, return_systems=True
        )
        for traj, theta in zip(trajectories, systems):
            dm = sd.build_data_matrices(traj)
            resid = dm.Xplus - theta.A @ dm.X - theta.B @ dm.U
            assert np.sum(resid**2) <= 20 * 0.015 * (1 + 1e-12)
            assert np.all(np.sum(resid**2, axis=0) <= 0.015 * (1 + 1e-12))

    def test_trajectory_seed_split_is_deterministic(self):
        seeds = [trajectory_seed(11, i) for i in range(5)]
        assert seeds == [trajectory_seed(11, i) for i in range(5)]
        assert len(set(seeds)) == 5

    def test_rejects_bad_n(self):
        dist = sd.default_benchmark_fleet(0.01)
        with pytest.raises(DataValidationError):
            sd.generate_dataset(dist, 0, sd.RolloutConfig(M=5, wbar=0.0), 0)
