"""Trajectory data, bounded-disturbance model, and data-consistency checks.

A recorded rollout is sliced into the three data matrices (current states,
successor states, inputs).  The admissible disturbance trajectories are the
solutions of a quadratic matrix inequality described by a partitioned
symmetric matrix (Phi11, Phi12, Phi22); the set of system matrices consistent
with a rollout under that disturbance model is what the synthesis layer has
to stabilize.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._linalg import as_matrix, is_symmetric, min_eig, symmetrize
from .errors import DataValidationError, SolverFailureError

DEFAULT_TOL_PD = 1e-9


def psd_tolerance(scale_matrix, rel=1e-9):
    """Scale-aware slack for floating-point semidefiniteness checks."""
    return rel * (1.0 + np.linalg.norm(scale_matrix))


def _frozen_array(value, name, ndim=2):
    arr = np.asarray(value, dtype=float)
    if arr.ndim != ndim:
        raise DataValidationError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataValidationError(f"{name} contains non-finite entries")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Trajectory:
    """One recorded state-input rollout of length M+1.

    ``states`` has shape (M+1, nx) and ``inputs`` shape (M+1, nu); the final
    input is recorded but never used by the slicing (the recursion only
    consumes inputs 0..M-1).
    """

    states: np.ndarray
    inputs: np.ndarray
    system_id: str = ""
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "states", _frozen_array(self.states, "states"))
        object.__setattr__(self, "inputs", _frozen_array(self.inputs, "inputs"))
        if self.states.shape[0] < 2:
            raise DataValidationError(
                f"need at least 2 states (M >= 1), got {self.states.shape[0]}"
            )
        if self.inputs.shape[0] != self.states.shape[0]:
            raise DataValidationError(
                f"inputs must match states in length: {self.inputs.shape[0]} "
                f"vs {self.states.shape[0]}"
            )
        if self.states.shape[1] < 1 or self.inputs.shape[1] < 1:
            raise DataValidationError("state and input dimensions must be >= 1")

    @property
    def nx(self):
        return self.states.shape[1]

    @property
    def nu(self):
        return self.inputs.shape[1]

    @property
    def horizon(self):
        """Number of transitions M."""
        return self.states.shape[0] - 1


@dataclass(frozen=True)
class DataMatrices:
    """Column-stacked rollout data: X (nx x M), Xplus (nx x M), U (nu x M)."""

    X: np.ndarray
    Xplus: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        for name in ("X", "Xplus", "U"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), name))
        if self.X.shape != self.Xplus.shape:
            raise DataValidationError(
                f"X and Xplus must share shape, got {self.X.shape} vs {self.Xplus.shape}"
            )
        if self.U.shape[1] != self.X.shape[1]:
            raise DataValidationError(
                f"U must have the same number of columns as X: "
                f"{self.U.shape[1]} vs {self.X.shape[1]}"
            )

    @property
    def nx(self):
        return self.X.shape[0]

    @property
    def nu(self):
        return self.U.shape[0]

    @property
    def horizon(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class NoiseModelQMI:
    """Partitioned quadratic matrix inequality describing admissible disturbances.

    A disturbance trajectory W (nx x M) is admissible when

        Phi11 + Phi12 W^T + W Phi12^T + W Phi22 W^T  is positive semidefinite.

    Phi11 must be symmetric and Phi22 symmetric negative definite.
    """

    Phi11: np.ndarray
    Phi12: np.ndarray
    Phi22: np.ndarray
    tol_pd: float = field(default=DEFAULT_TOL_PD, repr=False)

    def __post_init__(self):
        for name in ("Phi11", "Phi12", "Phi22"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), name))
        nx = self.Phi11.shape[0]
        m = self.Phi22.shape[0]
        if self.Phi11.shape != (nx, nx) or not is_symmetric(self.Phi11):
            raise DataValidationError("Phi11 must be square symmetric")
        if self.Phi22.shape != (m, m) or not is_symmetric(self.Phi22):
            raise DataValidationError("Phi22 must be square symmetric")
        if self.Phi12.shape != (nx, m):
            raise DataValidationError(
                f"Phi12 must be {nx}x{m}, got {self.Phi12.shape}"
            )
        top = float(np.linalg.eigvalsh(symmetrize(self.Phi22))[-1])
        if top >= -self.tol_pd:
            raise DataValidationError(
                f"Phi22 must be negative definite (largest eigenvalue {top:.3e})"
            )

    @property
    def nx(self):
        return self.Phi11.shape[0]

    @property
    def horizon(self):
        return self.Phi22.shape[0]

    def disturbance_form(self, W):
        """Evaluate the quadratic form at a disturbance trajectory W (nx x M)."""
        W = as_matrix(W, "W")
        if W.shape != (self.nx, self.horizon):
            raise DataValidationError(
                f"W must be {self.nx}x{self.horizon}, got {W.shape}"
            )
        return symmetrize(
            self.Phi11 + self.Phi12 @ W.T + W @ self.Phi12.T + W @ self.Phi22 @ W.T
        )


@dataclass(frozen=True)
class SlaterReport:
    """Outcome of the data-regularity check used as a synthesis prerequisite."""

    satisfied: bool
    witness_Z: Optional[np.ndarray]
    min_eigenvalue: float
    method: str  # "least-squares-candidate" or "feasibility-program"


def build_data_matrices(traj: Trajectory) -> DataMatrices:
    """Slice a rollout into (X, Xplus, U); pure function of the trajectory."""
    states = traj.states.T  # nx x (M+1)
    inputs = traj.inputs.T  # nu x (M+1)
    return DataMatrices(X=states[:, :-1], Xplus=states[:, 1:], U=inputs[:, :-1])


def noise_model_from_bound(wbar: float, M: int, nx: int) -> NoiseModelQMI:
    """Disturbance model for per-step energy bounds ||w_k||^2 <= wbar.

    Instantiates Phi11 = M*wbar*I, Phi12 = 0, Phi22 = -I; any disturbance
    trajectory whose steps satisfy the bound is admissible under it.
    """
    if wbar < 0:
        raise DataValidationError(f"wbar must be nonnegative, got {wbar}")
    if M < 1 or nx < 1:
        raise DataValidationError(f"M and nx must be >= 1, got M={M}, nx={nx}")
    return NoiseModelQMI(
        Phi11=M * wbar * np.eye(nx),
        Phi12=np.zeros((nx, M)),
        Phi22=-np.eye(M),
    )


def _check_compatible(dm: DataMatrices, qmi: NoiseModelQMI):
    if qmi.nx != dm.nx or qmi.horizon != dm.horizon:
        raise DataValidationError(
            f"noise model is for nx={qmi.nx}, M={qmi.horizon} but data has "
            f"nx={dm.nx}, M={dm.horizon}"
        )


def build_slater_matrix_V(dm: DataMatrices, qmi: NoiseModelQMI) -> np.ndarray:
    """Congruence of the disturbance model with the stacked data map.

    Returns the symmetric (2*nx + nu) matrix

        [I  Xplus; 0  -X; 0  -U] @ Phi @ [I  Xplus; 0  -X; 0  -U]^T

    computed blockwise so the full (nx+M)-dimensional Phi is never formed
    as one matrix product operand on both sides.
    """
    _check_compatible(dm, qmi)
    nx, nu = dm.nx, dm.nu
    G = np.vstack([dm.Xplus, -dm.X, -dm.U])  # (2nx+nu) x M
    E1 = np.zeros((2 * nx + nu, nx))
    E1[:nx, :nx] = np.eye(nx)
    cross = E1 @ (qmi.Phi12 @ G.T)
    V = E1 @ qmi.Phi11 @ E1.T + cross + cross.T + G @ qmi.Phi22 @ G.T
    return symmetrize(V)


def least_squares_system(dm: DataMatrices) -> np.ndarray:
    """Minimum-norm least-squares estimate [A_hat B_hat] (nx x (nx+nu))."""
    S = np.vstack([dm.X, dm.U])
    theta_t, *_ = np.linalg.lstsq(S.T, dm.Xplus.T, rcond=None)
    return theta_t.T


def check_generalized_slater(
    dm: DataMatrices, qmi: NoiseModelQMI, tol: Optional[float] = None
) -> SlaterReport:
    """Check that some Z makes [I; Z]^T V [I; Z] positive semidefinite.

    Stage 1 evaluates the cheap candidate Z built from the least-squares
    system estimate.  If that fails the tolerance, stage 2 evaluates the
    unconstrained maximizer of the (concave, since Phi22 is negative
    definite) quadratic form, obtained from the Schur complement against the
    data-excitation block; a pseudo-inverse is used when the stacked data
    matrix [X; U] is rank deficient.
    """
    V = build_slater_matrix_V(dm, qmi)
    if tol is None:
        tol = psd_tolerance(V)
    nx, nu = dm.nx, dm.nu

    def form_at(Z):
        stack = np.vstack([np.eye(nx), Z])
        return symmetrize(stack.T @ V @ stack)

    try:
        Z_ls = least_squares_system(dm).T  # (nx+nu) x nx
        eig_ls = min_eig(form_at(Z_ls))
        if eig_ls >= -tol:
            return SlaterReport(True, Z_ls, eig_ls, "least-squares-candidate")

        V12 = V[:nx, nx:]
        V22 = V[nx:, nx:]
        Z_opt = -np.linalg.pinv(V22, hermitian=True) @ V12.T
        eig_opt = min_eig(form_at(Z_opt))
    except np.linalg.LinAlgError as exc:
        raise SolverFailureError(f"eigenvalue/least-squares backend failed: {exc}")
    if eig_opt >= -tol:
        return SlaterReport(True, Z_opt, eig_opt, "feasibility-program")
    return SlaterReport(False, None, eig_opt, "feasibility-program")


def membership_consistent_set(theta, dm: DataMatrices, qmi: NoiseModelQMI) -> bool:
    """Whether the system (A, B) could have produced the recorded data.

    Computes the implied disturbance trajectory Xplus - A X - B U and tests
    it against the disturbance model with a scale-aware semidefiniteness
    slack.
    """
    A, B = theta
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    _check_compatible(dm, qmi)
    if A.shape != (dm.nx, dm.nx) or B.shape != (dm.nx, dm.nu):
        raise DataValidationError(
            f"theta must be ({dm.nx}x{dm.nx}, {dm.nx}x{dm.nu}), got "
            f"{A.shape}, {B.shape}"
        )
    W = dm.Xplus - A @ dm.X - B @ dm.U
    form = qmi.disturbance_form(W)
    return min_eig(form) >= -psd_tolerance(form)
