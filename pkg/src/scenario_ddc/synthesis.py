"""Controller synthesis via stacked semidefinite feasibility.

Each recorded rollout contributes one PSD constraint that is affine in the
shared decision record (P symmetric, L, a, b): a fixed block pattern in
(P, L, b) minus ``a`` times a constant data-dependent symmetric term.  A
feasible point certifies that K = L P^{-1} quadratically stabilizes every
system consistent with every supplied rollout; the scalar b enters the
block pattern as P - b I and fixes the stability margin, and the problem is
jointly positively homogeneous in (P, L, a, b), so the scale is pinned by
setting b = 1.
"""
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from ._linalg import as_matrix, min_eig, svec, svec_size, sym_basis, symmetrize
from .backends import (
    FAILURE,
    FEASIBLE,
    INFEASIBLE,
    PackedConstraint,
    PackedSdp,
    resolve_backends,
)
from .data import DataMatrices, NoiseModelQMI
from .errors import DataValidationError, NotPositiveDefiniteError

DEFAULT_DELTA = 1e-6
DEFAULT_FEASIBILITY_TOL = 1e-6
DEFAULT_TOL_LIN = 1e-9
DEFAULT_TOL_PD = 1e-9


def gain_block(P, L, b, nx, nu):
    """Fixed block pattern of the stability constraint, affine in (P, L, b).

    Rows/columns are grouped (nx, nx, nu, nx):

        [P - b I    0      0     0]
        [   0      -P    -L^T    0]
        [   0      -L      0     L]
        [   0       0     L^T    P]
    """
    size = 3 * nx + nu
    out = np.zeros((size, size))
    i1, i2, i3 = nx, 2 * nx, 2 * nx + nu
    out[:i1, :i1] = P - b * np.eye(nx)
    out[i1:i2, i1:i2] = -P
    out[i1:i2, i2:i3] = -L.T
    out[i2:i3, i1:i2] = -L
    out[i2:i3, i3:] = L
    out[i3:, i2:i3] = L.T
    out[i3:, i3:] = P
    return out


def data_quadratic_term(dm: DataMatrices, qmi: NoiseModelQMI) -> np.ndarray:
    """Constant symmetric term multiplying the scalar a in one constraint.

    This is the congruence of the disturbance-model matrix with the stacked
    data map, padded with a zero last block row/column; computed blockwise
    so memory stays O((3 nx + nu)^2) regardless of the rollout length.
    """
    if qmi.nx != dm.nx or qmi.horizon != dm.horizon:
        raise DataValidationError(
            f"noise model (nx={qmi.nx}, M={qmi.horizon}) does not match data "
            f"(nx={dm.nx}, M={dm.horizon})"
        )
    nx, nu = dm.nx, dm.nu
    size = 3 * nx + nu
    G = np.vstack([dm.Xplus, -dm.X, -dm.U, np.zeros((nx, dm.horizon))])
    E1 = np.zeros((size, nx))
    E1[:nx, :nx] = np.eye(nx)
    cross = E1 @ (qmi.Phi12 @ G.T)
    D = E1 @ qmi.Phi11 @ E1.T + cross + cross.T + G @ qmi.Phi22 @ G.T
    return symmetrize(D)


def _balance_transform(D):
    """Symmetric congruence factor T with T D T^T spectrally balanced.

    Ill-conditioned data terms (long rollouts of unstable systems) give the
    raw constraint entries spanning many orders of magnitude; conjugating
    the whole affine constraint by T leaves the feasible set untouched while
    keeping solver arithmetic in range.
    """
    lam, Q = np.linalg.eigh(D)
    return (Q * (1.0 / np.sqrt(1.0 + np.abs(lam)))) @ Q.T


@dataclass(frozen=True)
class ScenarioConstraint:
    """One rollout's PSD constraint, affine in the decision record."""

    data_term: np.ndarray
    nx: int
    nu: int
    _transform: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        D = np.asarray(self.data_term, dtype=float)
        size = 3 * self.nx + self.nu
        if D.shape != (size, size):
            raise DataValidationError(
                f"data term must be {size}x{size}, got {D.shape}"
            )
        D = symmetrize(D)
        D.flags.writeable = False
        object.__setattr__(self, "data_term", D)
        object.__setattr__(self, "_transform", _balance_transform(D))

    @property
    def size(self):
        return 3 * self.nx + self.nu

    def evaluate(self, P, L, a, b) -> np.ndarray:
        """Constraint matrix at a decision value (must be PSD when feasible)."""
        return gain_block(P, L, b, self.nx, self.nu) - a * self.data_term

    def margin(self, P, L, a, b) -> float:
        return min_eig(self.evaluate(P, L, a, b))

    @property
    def transform(self):
        return self._transform


def assemble_single_lmi(dm: DataMatrices, qmi: NoiseModelQMI) -> ScenarioConstraint:
    """Build the PSD constraint contributed by one rollout."""
    return ScenarioConstraint(
        data_term=data_quadratic_term(dm, qmi), nx=dm.nx, nu=dm.nu
    )


@dataclass(frozen=True)
class LmiProblem:
    """Stacked feasibility problem over the shared decision record.

    The decision is (P symmetric, L, a) with the homogeneous scale fixed by
    b = b_value; strict positivity of P is realized as P >= delta * I.
    """

    nx: int
    nu: int
    constraints: Tuple[ScenarioConstraint, ...]
    delta: float = DEFAULT_DELTA
    b_value: float = 1.0

    def __post_init__(self):
        if not self.constraints:
            raise DataValidationError("need at least one scenario constraint")
        for con in self.constraints:
            if (con.nx, con.nu) != (self.nx, self.nu):
                raise DataValidationError(
                    f"constraint dimensions ({con.nx}, {con.nu}) do not match "
                    f"problem ({self.nx}, {self.nu})"
                )
        if self.delta <= 0:
            raise DataValidationError(f"delta must be > 0, got {self.delta}")
        if self.b_value <= 0:
            raise DataValidationError(f"b_value must be > 0, got {self.b_value}")
        object.__setattr__(self, "constraints", tuple(self.constraints))

    @property
    def n_scenarios(self):
        return len(self.constraints)

    @property
    def n_dec(self):
        """P (packed symmetric) + L entries + a."""
        return svec_size(self.nx) + self.nu * self.nx + 1

    def split_decision(self, x):
        """Recover (P, L, a) from a packed decision vector."""
        q = svec_size(self.nx)
        from ._linalg import smat

        P = smat(np.asarray(x[:q], dtype=float))
        L = np.asarray(x[q:q + self.nu * self.nx], dtype=float).reshape(self.nu, self.nx)
        a = float(x[q + self.nu * self.nx])
        return P, L, a

    def pack(self, *, margin_objective=False, margin_cap=1.0) -> PackedSdp:
        """Materialize the problem for a conic backend.

        Scenario constraints are conjugated by their balancing transforms
        (an exact reformulation).  With ``margin_objective`` an extra
        decision t is appended, every scenario constraint is shifted to
        require a uniform margin of t in original (unconjugated) units, and
        the objective maximizes t capped at ``margin_cap``; the optimal t is
        then positive exactly when the original problem admits a strictly
        feasible point.
        """
        nx, nu = self.nx, self.nu
        q = svec_size(nx)
        n_dec = self.n_dec + (1 if margin_objective else 0)
        t_index = self.n_dec

        p_basis = sym_basis(nx)
        l_basis = []
        for r in range(nu):
            for c in range(nx):
                E = np.zeros((nu, nx))
                E[r, c] = 1.0
                l_basis.append(E)

        zero_p = np.zeros((nx, nx))
        zero_l = np.zeros((nu, nx))
        base_coeffs = []
        for j, Bp in enumerate(p_basis):
            base_coeffs.append((j, gain_block(Bp, zero_l, 0.0, nx, nu)))
        for j, El in enumerate(l_basis):
            base_coeffs.append((q + j, gain_block(zero_p, El, 0.0, nx, nu)))
        a_index = q + len(l_basis)

        constraints = []
        for con in self.constraints:
            T = con.transform
            coeffs = [(j, symmetrize(T @ F @ T.T)) for j, F in base_coeffs]
            coeffs.append((a_index, symmetrize(-T @ con.data_term @ T.T)))
            if margin_objective:
                coeffs.append((t_index, -symmetrize(T @ T.T)))
            F0 = symmetrize(
                T @ gain_block(zero_p, zero_l, self.b_value, nx, nu) @ T.T
            )
            constraints.append(PackedConstraint(F0=F0, coeffs=tuple(coeffs)))

        # P >= delta I
        constraints.append(PackedConstraint(
            F0=-self.delta * np.eye(nx),
            coeffs=tuple((j, p_basis[j]) for j in range(q)),
        ))
        # a >= 0
        constraints.append(PackedConstraint(
            F0=np.zeros((1, 1)), coeffs=((a_index, np.ones((1, 1))),),
        ))
        c = None
        if margin_objective:
            # t <= margin_cap keeps the objective bounded
            constraints.append(PackedConstraint(
                F0=np.array([[margin_cap]]), coeffs=((t_index, -np.ones((1, 1))),),
            ))
            c = np.zeros(n_dec)
            c[t_index] = -1.0  # backends minimize
        return PackedSdp(n_dec=n_dec, constraints=tuple(constraints), c=c)


def assemble_scenario_lmi(
    dms: Sequence[DataMatrices],
    qmis: Sequence[NoiseModelQMI],
    delta: float = DEFAULT_DELTA,
) -> LmiProblem:
    """Stack one constraint per rollout with the shared decision record."""
    if len(dms) == 0:
        raise DataValidationError("need at least one rollout")
    if len(dms) != len(qmis):
        raise DataValidationError(
            f"got {len(dms)} rollouts but {len(qmis)} noise models"
        )
    nx, nu = dms[0].nx, dms[0].nu
    for dm in dms:
        if (dm.nx, dm.nu) != (nx, nu):
            raise DataValidationError(
                f"all rollouts must share dimensions; got ({dm.nx}, {dm.nu}) "
                f"vs ({nx}, {nu})"
            )
    constraints = tuple(
        assemble_single_lmi(dm, qmi) for dm, qmi in zip(dms, qmis)
    )
    return LmiProblem(nx=nx, nu=nu, constraints=constraints, delta=delta)


@dataclass(frozen=True)
class SynthesisCertificate:
    """Verified feasible point of the stacked program.

    ``per_scenario_margins`` holds the smallest eigenvalue of every scenario
    constraint re-evaluated at the solution with an independent eigenvalue
    routine; they are not copied from solver output.
    """

    P: np.ndarray
    L: np.ndarray
    a: float
    b: float
    K: np.ndarray
    per_scenario_margins: Tuple[float, ...]
    delta: float
    info: dict = field(default_factory=dict, compare=False)

    @property
    def nx(self):
        return self.P.shape[0]

    @property
    def nu(self):
        return self.L.shape[0]


@dataclass(frozen=True)
class Infeasible:
    """The stacked program was reported infeasible."""

    attempts: Tuple[str, ...]
    relaxation: Optional[str] = None  # objective mode that produced the verdict


@dataclass(frozen=True)
class NumericalFailure:
    """No backend produced either a verifiable point or an infeasibility verdict."""

    attempts: Tuple[str, ...]
    message: str = ""


def extract_controller(P, L, tol_lin: float = DEFAULT_TOL_LIN) -> np.ndarray:
    """Solve K P = L for K using a positive-definite factorization.

    No explicit inverse is formed; the residual ||K P - L||_F is checked
    against tol_lin * ||L||_F after the solve.
    """
    P = as_matrix(P, "P")
    L = as_matrix(L, "L")
    eig0 = min_eig(P)
    if eig0 <= 0:
        raise NotPositiveDefiniteError(
            f"P must be positive definite (min eigenvalue {eig0:.3e})"
        )
    factor = scipy.linalg.cho_factor(symmetrize(P))
    K = scipy.linalg.cho_solve(factor, L.T).T
    residual = np.linalg.norm(K @ P - L)
    bound = tol_lin * max(np.linalg.norm(L), 1e-30)
    if residual > max(bound, 1e-12):
        raise NotPositiveDefiniteError(
            f"gain solve residual {residual:.3e} exceeds tolerance {bound:.3e}"
        )
    return K


class StabilityCheck(NamedTuple):
    stable: bool
    margin: float


def certify_quadratic_stability(
    K, P, theta, tol_pd: float = DEFAULT_TOL_PD
) -> StabilityCheck:
    """Margin of P - (A + B K) P (A + B K)^T for one system.

    Returns the smallest eigenvalue of that matrix and whether it clears a
    positive threshold scaled by trace(P)/nx.
    """
    A, B = _theta_matrices(theta)
    K = as_matrix(K, "K")
    P = as_matrix(P, "P")
    nx = P.shape[0]
    if A.shape != (nx, nx) or B.shape[0] != nx or K.shape != (B.shape[1], nx):
        raise DataValidationError(
            f"inconsistent shapes: A {A.shape}, B {B.shape}, K {K.shape}, P {P.shape}"
        )
    F = A + B @ K
    margin = min_eig(P - F @ P @ F.T)
    return StabilityCheck(stable=bool(margin > tol_pd * np.trace(P) / nx), margin=margin)


def _theta_matrices(theta):
    A = getattr(theta, "A", None)
    B = getattr(theta, "B", None)
    if A is None or B is None:
        A, B = theta
    return as_matrix(A, "A"), as_matrix(B, "B")


def verify_feasible_point(
    problem: LmiProblem, P, L, a, feasibility_tol: float = DEFAULT_FEASIBILITY_TOL
):
    """Independent check of a candidate decision; returns (ok, margins, why).

    Margins are computed on the original (unconjugated) constraints.  The
    acceptance threshold scales with the decision blocks, not with the data
    terms, so an accepted point's violations are negligible relative to the
    stability margin fixed by b.
    """
    P = symmetrize(as_matrix(P, "P"))
    L = as_matrix(L, "L")
    a = float(a)
    if a < 0:
        if a < -feasibility_tol:
            return False, (), f"negative multiplier a = {a:.3e}"
        a = 0.0
    eig_p = min_eig(P)
    slack = feasibility_tol * (1.0 + np.linalg.norm(P))
    if eig_p <= 0 or eig_p < problem.delta - slack:
        return False, (), f"P not sufficiently positive definite (min eig {eig_p:.3e})"
    scale = 1.0 + np.linalg.norm(
        gain_block(P, L, problem.b_value, problem.nx, problem.nu)
    )
    margins = tuple(
        con.margin(P, L, a, problem.b_value) for con in problem.constraints
    )
    worst = min(margins)
    if worst < -feasibility_tol * scale:
        return False, margins, (
            f"scenario margin {worst:.3e} below tolerance {-feasibility_tol * scale:.3e}"
        )
    return True, margins, ""


def solve_feasibility(
    problem: LmiProblem,
    backend=None,
    *,
    objective: str = "feasibility",
    feasibility_tol: float = DEFAULT_FEASIBILITY_TOL,
    margin_cap: float = 1.0,
):
    """Solve the stacked program and classify the outcome.

    Returns a SynthesisCertificate, an Infeasible verdict, or a
    NumericalFailure; the three are mutually exclusive.  Backends are tried
    in order (a robustness ladder by default).  Any point a backend claims
    is feasible is re-verified with independent eigenvalue computations
    before a certificate is issued; points failing verification fall
    through to the next backend.  With ``objective="max-margin"`` the
    uniform constraint margin is maximized (capped), which also turns a
    strictly negative optimal margin into an infeasibility verdict.
    """
    if objective not in ("feasibility", "max-margin"):
        raise DataValidationError(f"unknown objective {objective!r}")
    margin_mode = objective == "max-margin"
    packed = problem.pack(margin_objective=margin_mode, margin_cap=margin_cap)
    attempts = []
    saw_infeasible = False
    for rung in resolve_backends(backend):
        t0 = time.perf_counter()
        result = rung.solve(packed)
        elapsed = time.perf_counter() - t0
        label = f"{getattr(rung, 'name', type(rung).__name__)}[{objective}]"
        attempts.append(f"{label}: {result.info.get('raw_status', result.status)}")
        if result.status == INFEASIBLE:
            # a solver's infeasibility verdict can be wrong on marginal
            # instances; keep looking for a verifiable point and only settle
            # on infeasible once the whole ladder failed to produce one
            saw_infeasible = True
            continue
        if result.x is None:
            continue
        P, L, a = problem.split_decision(result.x)
        if margin_mode and result.status == FEASIBLE:
            t_opt = float(result.x[problem.n_dec])
            if t_opt < -feasibility_tol:
                attempts[-1] += f" (max margin {t_opt:.3e} < 0)"
                saw_infeasible = True
                continue
        ok, margins, why = verify_feasible_point(problem, P, L, a, feasibility_tol)
        if ok:
            K = extract_controller(P, L)
            info = dict(result.info)
            info.update(
                objective=objective,
                attempts=tuple(attempts),
                wall_time=elapsed,
            )
            return SynthesisCertificate(
                P=symmetrize(P),
                L=L,
                a=max(a, 0.0),
                b=problem.b_value,
                K=K,
                per_scenario_margins=margins,
                delta=problem.delta,
                info=info,
            )
        attempts[-1] += f" (verification: {why})"
    if saw_infeasible:
        return Infeasible(attempts=tuple(attempts), relaxation=objective)
    return NumericalFailure(
        attempts=tuple(attempts),
        message="no backend produced a verifiable point or an infeasibility verdict",
    )
