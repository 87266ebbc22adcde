"""Exception types shared across the package."""


class ScenarioDdcError(Exception):
    """Base class for all package errors."""


class DataValidationError(ScenarioDdcError, ValueError):
    """Malformed or dimensionally inconsistent user input."""


class RolloutOverflowError(ScenarioDdcError):
    """An open-loop rollout left the representable state range.

    Raised when any state entry exceeds the configured magnitude cap, which
    signals an exploding open-loop system; the caller can shorten the horizon
    or draw a fresh system.
    """

    def __init__(self, step, magnitude, cap):
        self.step = int(step)
        self.magnitude = float(magnitude)
        self.cap = float(cap)
        super().__init__(
            f"state magnitude {magnitude:.3e} exceeded cap {cap:.3e} at step {step}"
        )


class SamplingError(ScenarioDdcError):
    """Rejection sampling failed to produce an accepted draw within its cap."""


class SolverFailureError(ScenarioDdcError):
    """A numerical backend failed in a way that is not an infeasibility verdict."""


class NotPositiveDefiniteError(ScenarioDdcError, ValueError):
    """A matrix required to be positive definite is not."""
