"""Exception types raised across the package.

Each class name doubles as the error tag printed by the CLI.
"""


class QuenchError(Exception):
    """Base class for all package errors."""


class SingularEvaluation(QuenchError):
    """The ODE right-hand side was requested at a singular point (eta = 0 or 1)."""


class NonpositiveV(QuenchError):
    """The profile value is not positive where positivity is required."""


class QuenchedAt(QuenchError):
    """An ODE trajectory reached v = v_floor before the requested end point."""

    def __init__(self, eta, trajectory=None):
        super().__init__(f"solution quenched at eta = {eta:.12g}")
        self.eta = eta
        self.trajectory = trajectory


class StiffnessFailure(QuenchError):
    """The adaptive step size underflowed."""


class FitFailure(QuenchError):
    """A local expansion could not be matched to trajectory data."""


class FitIllConditioned(FitFailure):
    """A least-squares fit could not separate its components."""


class AmbiguousBranch(FitFailure):
    """A far-field fit matched neither the constant nor the growth branch."""


class WindowTooNarrow(FitFailure):
    """Too few samples fall inside a fitting window."""


class BallViolation(QuenchError):
    """A Picard iterate left the admissible ball sigma1 <= v <= sigma2."""


class NoContraction(QuenchError):
    """Picard iteration failed to contract even at the smallest interval."""


class SeriesDivergence(QuenchError):
    """A power series was evaluated outside its disc of convergence."""


class NoRootsInRange(QuenchError):
    """No sign change of the shooting indicator was found in the scan range."""


class NewtonDivergence(QuenchError):
    """The implicit time step failed to converge after all retries."""


class NoQuench(QuenchError):
    """The PDE run exhausted its time budget without quenching."""
