import numpy as np
import pytest

import scenario_ddc as sd


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_scalar_data(A=0.9, B=1.4, M=20, wbar=0.015, seed=0, noise=True):
    """Rollout + slicing for a scalar system; returns (dm, qmi, theta)."""
    rng = np.random.default_rng(seed)
    theta = sd.SystemSample(A=np.array([[A]]), B=np.array([[B]]))
    cfg = sd.RolloutConfig(M=M, wbar=wbar if noise else 0.0)
    traj = sd.simulate_trajectory(theta, cfg, rng)
    dm = sd.build_data_matrices(traj)
    qmi = sd.noise_model_from_bound(wbar, M, 1)
    return dm, qmi, theta


def random_stable_leaning_fleet(rng, nx, nu, sigma2):
    """Small correlated fleet whose mean system is at most mildly unstable."""
    while True:
        A = rng.normal(scale=0.6, size=(nx, nx))
        rho = np.max(np.abs(np.linalg.eigvals(A)))
        if rho > 1e-6:
            break
    A *= rng.uniform(0.5, 1.05) / rho
    B = rng.normal(scale=1.0, size=(nx, nu)) + np.eye(nx, nu)
    mu = np.concatenate([A, B], axis=1).flatten(order="F")
    dim = mu.size
    Sigma = sigma2 * (0.5 * np.eye(dim) + 0.5 * np.ones((dim, dim)))
    return sd.FleetDistribution(mu=mu, Sigma=Sigma, nx=nx, nu=nu)
