"""Probabilistic system model: truncated-normal fleets and rollout simulation.

A fleet is a truncated multivariate normal over the stacked entries of
[A B] (column-major vec convention).  Sampling is by rejection from the
untruncated normal; the default truncation region is the ellipsoidal level
set of the covariance holding 95% of the untruncated mass, so the acceptance
rate equals the mass parameter by construction and the mean stays centered.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.stats import chi2, norm

from ._linalg import is_symmetric
from .data import Trajectory
from .errors import (
    DataValidationError,
    RolloutOverflowError,
    SamplingError,
)

STATE_MAGNITUDE_CAP = 1e12
_REJECTION_CAP = 10**6


@dataclass(frozen=True)
class UniformBoxLaw:
    """Entries drawn i.i.d. uniformly from [-magnitude, magnitude]."""

    magnitude: float = 1.0

    def __post_init__(self):
        if self.magnitude <= 0:
            raise DataValidationError(f"magnitude must be > 0, got {self.magnitude}")

    def draw(self, rng, dim):
        return rng.uniform(-self.magnitude, self.magnitude, dim)


@dataclass(frozen=True)
class GaussianLaw:
    """Entries drawn i.i.d. from a zero-mean normal with the given std."""

    std: float = 1.0

    def __post_init__(self):
        if self.std <= 0:
            raise DataValidationError(f"std must be > 0, got {self.std}")

    def draw(self, rng, dim):
        return self.std * rng.standard_normal(dim)


@dataclass(frozen=True)
class FixedLaw:
    """Deterministic vector (used for pinned initial conditions)."""

    value: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.value, dtype=float)
        if arr.ndim != 1 or not np.all(np.isfinite(arr)):
            raise DataValidationError("fixed law needs a finite 1-D vector")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "value", arr)

    def draw(self, rng, dim):
        if len(self.value) != dim:
            raise DataValidationError(
                f"fixed vector has dimension {len(self.value)}, expected {dim}"
            )
        return self.value.copy()


InputLaw = Union[UniformBoxLaw, GaussianLaw, FixedLaw]
X0Law = Union[UniformBoxLaw, GaussianLaw, FixedLaw]


@dataclass(frozen=True)
class FleetDistribution:
    """Truncated normal over vec([A B]) with column-major vec convention."""

    mu: np.ndarray
    Sigma: np.ndarray
    nx: int
    nu: int
    truncation: str = "ellipsoid"  # or "box"
    mass: float = 0.95
    _factor: np.ndarray = field(init=False, repr=False, compare=False)
    _rank: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).copy()
        Sigma = np.asarray(self.Sigma, dtype=float).copy()
        dim = self.nx * (self.nx + self.nu)
        if mu.shape != (dim,):
            raise DataValidationError(
                f"mu must have length nx*(nx+nu)={dim}, got {mu.shape}"
            )
        if Sigma.shape != (dim, dim) or not is_symmetric(Sigma):
            raise DataValidationError(f"Sigma must be symmetric {dim}x{dim}")
        if not (0.0 < self.mass < 1.0):
            raise DataValidationError(f"truncation mass must be in (0,1), got {self.mass}")
        if self.truncation not in ("ellipsoid", "box"):
            raise DataValidationError(
                f"truncation must be 'ellipsoid' or 'box', got {self.truncation!r}"
            )
        lam, Q = np.linalg.eigh(0.5 * (Sigma + Sigma.T))
        tol = 1e-12 * (1.0 + float(lam[-1]))
        if lam[0] < -tol:
            raise DataValidationError(
                f"Sigma must be positive semidefinite (min eigenvalue {lam[0]:.3e})"
            )
        keep = lam > tol
        # Rank-revealing factor: theta = mu + factor @ z with z standard normal
        # of length rank(Sigma).  Singular directions are simply pinned to mu.
        factor = Q[:, keep] * np.sqrt(lam[keep])
        mu.flags.writeable = False
        Sigma.flags.writeable = False
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "_factor", factor)
        object.__setattr__(self, "_rank", int(np.count_nonzero(keep)))

    @property
    def dim(self):
        return self.nx * (self.nx + self.nu)

    def unpack(self, theta_vec):
        """Reshape a stacked parameter vector into (A, B), column-major."""
        mat = np.asarray(theta_vec, dtype=float).reshape(
            self.nx, self.nx + self.nu, order="F"
        )
        return mat[:, : self.nx].copy(), mat[:, self.nx:].copy()

    def mahalanobis_radius2(self):
        """Squared level-set radius holding `mass` of the untruncated normal."""
        if self._rank == 0:
            return 0.0
        return float(chi2.ppf(self.mass, self._rank))

    def box_halfwidth_multiplier(self):
        """Componentwise half-width (in stds) for the box truncation.

        Calibrated so that independent components would land inside with
        probability `mass`; with correlated components the realized
        acceptance rate differs, which is the documented trade-off of this
        alternative region.
        """
        return float(norm.ppf(0.5 * (1.0 + self.mass ** (1.0 / max(self.dim, 1)))))


@dataclass(frozen=True)
class SystemSample:
    """One realization (A, B) drawn from a fleet."""

    A: np.ndarray
    B: np.ndarray
    draw_index: int = 0

    def __post_init__(self):
        for name in ("A", "B"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            if not np.all(np.isfinite(arr)):
                raise DataValidationError(f"{name} contains non-finite entries")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class RolloutConfig:
    """Horizon, disturbance bound, and excitation laws for one rollout."""

    M: int
    wbar: float
    input_law: InputLaw = UniformBoxLaw(1.0)
    x0_law: X0Law = UniformBoxLaw(1.0)
    seed: int = 0
    state_cap: float = STATE_MAGNITUDE_CAP

    def __post_init__(self):
        if self.M < 1:
            raise DataValidationError(f"M must be >= 1, got {self.M}")
        if self.wbar < 0:
            raise DataValidationError(f"wbar must be >= 0, got {self.wbar}")
        if self.state_cap <= 0:
            raise DataValidationError("state_cap must be positive")


def default_benchmark_fleet(sigma2: float, truncation: str = "ellipsoid") -> FleetDistribution:
    """Three-state graph-Laplacian benchmark fleet with correlated parameters.

    The mean pairs a marginally unstable A with an identity input matrix;
    the covariance sigma2 * (0.5 I + 0.5 J) has unit-diagonal scaling and
    correlation 0.5 between every pair of parameters (J is all-ones).
    """
    if sigma2 <= 0:
        raise DataValidationError(f"sigma2 must be > 0, got {sigma2}")
    A_mean = np.array([
        [1.01, 0.01, 0.0],
        [0.01, 1.01, 0.01],
        [0.0, 0.01, 1.01],
    ])
    B_mean = np.eye(3)
    mu = np.concatenate([A_mean, B_mean], axis=1).flatten(order="F")
    dim = mu.size
    Sigma = sigma2 * (0.5 * np.eye(dim) + 0.5 * np.ones((dim, dim)))
    return FleetDistribution(mu=mu, Sigma=Sigma, nx=3, nu=3, truncation=truncation)


def sample_system(dist: FleetDistribution, rng, draw_index: int = 0) -> SystemSample:
    """Rejection-sample one system from the truncated fleet distribution.

    Ellipsoid mode accepts a standard-normal draw z when ||z||^2 is below
    the chi-square quantile of the (rank-reduced) covariance, which leaves
    exactly `mass` of the untruncated distribution inside.
    """
    rank = dist._rank
    if rank == 0:
        A, B = dist.unpack(dist.mu)
        return SystemSample(A=A, B=B, draw_index=draw_index)
    if dist.truncation == "ellipsoid":
        r2 = dist.mahalanobis_radius2()
        for _ in range(_REJECTION_CAP):
            z = rng.standard_normal(rank)
            if z @ z <= r2:
                A, B = dist.unpack(dist.mu + dist._factor @ z)
                return SystemSample(A=A, B=B, draw_index=draw_index)
    else:
        half = dist.box_halfwidth_multiplier() * np.sqrt(np.diag(dist.Sigma))
        for _ in range(_REJECTION_CAP):
            z = rng.standard_normal(rank)
            theta = dist.mu + dist._factor @ z
            if np.all(np.abs(theta - dist.mu) <= half):
                A, B = dist.unpack(theta)
                return SystemSample(A=A, B=B, draw_index=draw_index)
    raise SamplingError(
        f"no accepted draw within {_REJECTION_CAP} rejection-sampling attempts"
    )


def sample_noise(wbar: float, nx: int, rng) -> np.ndarray:
    """Uniform draw from the closed Euclidean ball of radius sqrt(wbar)."""
    if wbar < 0:
        raise DataValidationError(f"wbar must be >= 0, got {wbar}")
    if wbar == 0.0:
        return np.zeros(nx)
    while True:
        direction = rng.standard_normal(nx)
        nrm = np.linalg.norm(direction)
        if nrm > 0:
            break
    radius = math.sqrt(wbar) * rng.uniform() ** (1.0 / nx)
    return direction * (radius / nrm)


def simulate_trajectory(
    theta: SystemSample,
    cfg: RolloutConfig,
    rng,
    *,
    system_id: str = "",
    seed: Optional[int] = None,
) -> Trajectory:
    """Iterate x_{k+1} = A x_k + B u_k + w_k for M steps.

    Draw order is fixed (x0, then u_k and w_k per step, then the trailing
    recorded input) so a given generator state always produces the same
    rollout.  Raises RolloutOverflowError when any state entry exceeds the
    configured cap.
    """
    A, B = theta.A, theta.B
    nx, nu = A.shape[0], B.shape[1]
    if A.shape != (nx, nx) or B.shape[0] != nx:
        raise DataValidationError(f"inconsistent system shapes {A.shape}, {B.shape}")
    states = np.empty((cfg.M + 1, nx))
    inputs = np.empty((cfg.M + 1, nu))
    x = np.asarray(cfg.x0_law.draw(rng, nx), dtype=float)
    states[0] = x
    for k in range(cfg.M):
        u = cfg.input_law.draw(rng, nu)
        w = sample_noise(cfg.wbar, nx, rng)
        x = A @ x + B @ u + w
        magnitude = float(np.max(np.abs(x)))
        if magnitude > cfg.state_cap:
            raise RolloutOverflowError(step=k + 1, magnitude=magnitude, cap=cfg.state_cap)
        inputs[k] = u
        states[k + 1] = x
    inputs[cfg.M] = cfg.input_law.draw(rng, nu)
    return Trajectory(states=states, inputs=inputs, system_id=system_id, seed=seed)


def trajectory_seed(master_seed: int, index: int) -> int:
    """Deterministic per-trajectory seed derived from (master_seed, index)."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def generate_dataset(
    dist: FleetDistribution,
    N: int,
    cfg: RolloutConfig,
    master_seed: int,
    *,
    return_systems: bool = False,
):
    """Draw N systems and record one rollout from each.

    Per-trajectory randomness comes from independent substreams derived from
    (master_seed, index), so datasets are reproducible regardless of how the
    loop is scheduled.  With ``return_systems=True`` the hidden ground-truth
    systems are returned alongside for validation; serialization never
    includes them.
    """
    if N < 1:
        raise DataValidationError(f"N must be >= 1, got {N}")
    trajectories, systems = [], []
    for i in range(N):
        seed_i = trajectory_seed(master_seed, i)
        rng = np.random.default_rng(seed_i)
        theta = sample_system(dist, rng, draw_index=i)
        traj = simulate_trajectory(theta, cfg, rng, system_id=f"sys-{i}", seed=seed_i)
        trajectories.append(traj)
        systems.append(theta)
    if return_systems:
        return trajectories, systems
    return trajectories
