"""Post-synthesis generalization checks.

Monte-Carlo estimation of the violation level on fresh system draws, plus
geometry of the data-consistent set for scalar systems (rasterized
membership masks and their across-rollout dispersion).
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import DataMatrices, NoiseModelQMI, membership_consistent_set
from .errors import DataValidationError
from .fleet import FleetDistribution, sample_system
from .synthesis import certify_quadratic_stability

DEFAULT_TOL_PD = 1e-9


def spectral_radius(Acl) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    arr = np.asarray(Acl, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DataValidationError(f"need a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataValidationError("matrix contains non-finite entries")
    return float(np.max(np.abs(np.linalg.eigvals(arr))))


@dataclass(frozen=True)
class ValidationReport:
    """Violation estimates over fresh system draws.

    The spectral count uses rho(A + B K) >= 1 as the failure test; the
    quadratic count additionally demands the shared P certify the closed
    loop, so it is never smaller.
    """

    n_test: int
    n_unstable_spectral: int
    n_violating_quadratic: int
    alpha_hat_spectral: float
    alpha_hat_quadratic: float
    seed: int

    def __post_init__(self):
        if not (0 <= self.n_unstable_spectral <= self.n_test):
            raise DataValidationError("spectral count out of range")
        if not (0 <= self.n_violating_quadratic <= self.n_test):
            raise DataValidationError("quadratic count out of range")


def estimate_alpha(
    K,
    P,
    dist: FleetDistribution,
    n_test: int,
    seed: int,
    tol_pd: float = DEFAULT_TOL_PD,
) -> ValidationReport:
    """Draw fresh systems and count the ones the controller fails to stabilize."""
    if n_test < 1:
        raise DataValidationError(f"n_test must be >= 1, got {n_test}")
    K = np.asarray(K, dtype=float)
    P = np.asarray(P, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n_spectral = 0
    n_quadratic = 0
    for i in range(n_test):
        theta = sample_system(dist, rng, draw_index=i)
        if spectral_radius(theta.A + theta.B @ K) >= 1.0:
            n_spectral += 1
        if not certify_quadratic_stability(K, P, theta, tol_pd=tol_pd).stable:
            n_quadratic += 1
    return ValidationReport(
        n_test=n_test,
        n_unstable_spectral=n_spectral,
        n_violating_quadratic=n_quadratic,
        alpha_hat_spectral=n_spectral / n_test,
        alpha_hat_quadratic=n_quadratic / n_test,
        seed=int(seed),
    )


@dataclass(frozen=True)
class ConsistentSetRaster:
    """Boolean membership mask of the data-consistent set on an (A, B) grid.

    mask[i, j] is the membership verdict at (a_values[i], b_values[j]);
    no interpolation is involved, each cell is an exact pointwise check.
    """

    a_values: np.ndarray
    b_values: np.ndarray
    mask: np.ndarray
    horizon: int
    seed: Optional[int] = None

    def __post_init__(self):
        a = np.asarray(self.a_values, dtype=float).copy()
        b = np.asarray(self.b_values, dtype=float).copy()
        mask = np.asarray(self.mask, dtype=bool).copy()
        if mask.shape != (len(a), len(b)):
            raise DataValidationError(
                f"mask shape {mask.shape} does not match grid "
                f"({len(a)}, {len(b)})"
            )
        for arr in (a, b, mask):
            arr.flags.writeable = False
        object.__setattr__(self, "a_values", a)
        object.__setattr__(self, "b_values", b)
        object.__setattr__(self, "mask", mask)

    def centroid(self):
        """Mean (a, b) over member cells; raises on an empty mask."""
        idx_a, idx_b = np.nonzero(self.mask)
        if idx_a.size == 0:
            raise DataValidationError("raster mask is empty")
        return np.array([
            float(np.mean(self.a_values[idx_a])),
            float(np.mean(self.b_values[idx_b])),
        ])

    def area(self):
        """Member-cell count times cell area (zero for degenerate grids)."""
        if len(self.a_values) < 2 or len(self.b_values) < 2:
            return 0.0
        cell = float(
            (self.a_values[1] - self.a_values[0]) * (self.b_values[1] - self.b_values[0])
        )
        return float(np.count_nonzero(self.mask)) * abs(cell)


def consistent_set_raster_1d(
    dm: DataMatrices,
    qmi: NoiseModelQMI,
    window: Sequence[float],
    resolution: int,
    seed: Optional[int] = None,
) -> ConsistentSetRaster:
    """Evaluate consistent-set membership on a grid for a scalar system.

    ``window`` is (a_min, a_max, b_min, b_max); the grid has ``resolution``
    points per axis including both endpoints.  Each grid point runs the same
    membership test used everywhere else, so the raster agrees with
    pointwise queries exactly.
    """
    if dm.nx != 1 or dm.nu != 1:
        raise DataValidationError(
            f"raster supports scalar systems only, got nx={dm.nx}, nu={dm.nu}"
        )
    if resolution < 2:
        raise DataValidationError(f"resolution must be >= 2, got {resolution}")
    a_min, a_max, b_min, b_max = map(float, window)
    if not (a_min < a_max and b_min < b_max):
        raise DataValidationError(f"degenerate window {window}")
    a_values = np.linspace(a_min, a_max, resolution)
    b_values = np.linspace(b_min, b_max, resolution)
    mask = np.empty((resolution, resolution), dtype=bool)
    for i, a in enumerate(a_values):
        for j, b in enumerate(b_values):
            theta = (np.array([[a]]), np.array([[b]]))
            mask[i, j] = membership_consistent_set(theta, dm, qmi)
    return ConsistentSetRaster(
        a_values=a_values,
        b_values=b_values,
        mask=mask,
        horizon=dm.horizon,
        seed=seed,
    )


def centroid_dispersion(rasters: Sequence[ConsistentSetRaster]) -> float:
    """Root-mean-square distance of mask centroids from their mean.

    All rasters must share the same grid; identical rasters give zero.
    """
    if len(rasters) < 2:
        raise DataValidationError(f"need at least 2 rasters, got {len(rasters)}")
    ref = rasters[0]
    for r in rasters[1:]:
        if not (
            np.array_equal(r.a_values, ref.a_values)
            and np.array_equal(r.b_values, ref.b_values)
        ):
            raise DataValidationError("rasters must share the same grid")
    centroids = np.array([r.centroid() for r in rasters])
    mean = centroids.mean(axis=0)
    return float(np.sqrt(np.mean(np.sum((centroids - mean) ** 2, axis=1))))


def area_variance(rasters: Sequence[ConsistentSetRaster]) -> float:
    """Population variance of mask areas across rasters."""
    if len(rasters) < 2:
        raise DataValidationError(f"need at least 2 rasters, got {len(rasters)}")
    areas = np.array([r.area() for r in rasters])
    if np.ptp(areas) == 0.0:
        return 0.0
    return float(np.var(areas))
