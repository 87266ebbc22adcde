"""Sample-complexity bounds for the randomized synthesis program.

The stacked feasibility program has n = nx^2 + nx*nu + 2 scalar decision
variables (the full square count for the symmetric matrix variable, the gain
parameter block, and the two shared scalars).  Drawing

    N >= (2 / alpha) * (ln(1 / epsilon) + n)

independent trajectories guarantees, with confidence 1 - epsilon, that a
feasible solution stabilizes all but an alpha-fraction of the underlying
system distribution.
"""
import math
from dataclasses import dataclass

from .errors import DataValidationError


def decision_dimension(nx: int, nu: int) -> int:
    """Scalar decision count of the stacked program."""
    if nx < 1 or nu < 1:
        raise DataValidationError(f"dimensions must be >= 1, got nx={nx}, nu={nu}")
    return nx * nx + nx * nu + 2


def _check_unit_interval(name, value):
    if not (0.0 < value < 1.0):
        raise DataValidationError(f"{name} must lie in (0, 1), got {value}")


def required_scenarios_raw(alpha: float, epsilon: float, nx: int, nu: int) -> float:
    """Un-rounded value of the sample-size bound."""
    _check_unit_interval("alpha", alpha)
    _check_unit_interval("epsilon", epsilon)
    n = decision_dimension(nx, nu)
    return (2.0 / alpha) * (math.log(1.0 / epsilon) + n)


def required_scenarios(alpha: float, epsilon: float, nx: int, nu: int) -> int:
    """Smallest integer N satisfying the sample-size bound.

    The ceiling is deliberate: N must be an integer at least as large as the
    raw bound, so a fractional value is always rounded up, never truncated.
    """
    return math.ceil(required_scenarios_raw(alpha, epsilon, nx, nu))


def achievable_alpha(N: int, epsilon: float, nx: int, nu: int) -> float:
    """Violation level certified by N scenarios at confidence 1 - epsilon.

    Values above 1 mean the bound is vacuous for this N; callers should
    report that explicitly rather than clamping silently.
    """
    if N < 1:
        raise DataValidationError(f"N must be >= 1, got {N}")
    _check_unit_interval("epsilon", epsilon)
    n = decision_dimension(nx, nu)
    return (2.0 / N) * (math.log(1.0 / epsilon) + n)


@dataclass(frozen=True)
class ScenarioSpec:
    """Resolved sample-complexity request."""

    alpha: float
    epsilon: float
    nx: int
    nu: int
    n: int
    N_required: int

    @classmethod
    def resolve(cls, alpha: float, epsilon: float, nx: int, nu: int) -> "ScenarioSpec":
        return cls(
            alpha=alpha,
            epsilon=epsilon,
            nx=nx,
            nu=nu,
            n=decision_dimension(nx, nu),
            N_required=required_scenarios(alpha, epsilon, nx, nu),
        )
