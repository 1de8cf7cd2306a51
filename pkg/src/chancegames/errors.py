"""Exception types raised by the solver stack."""


class ChanceGamesError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ChanceGamesError, ValueError):
    """Raised when an argument violates a documented precondition."""


class NumericalError(ChanceGamesError):
    """Raised when a computation fails for numerical reasons (context in message)."""


class EquilibriumDegeneracyError(NumericalError):
    """Raised when the stacked stage system of an LQ game is near-singular.

    Carries the timestep at which the degeneracy was detected.
    """

    def __init__(self, timestep: int, min_singular_value: float):
        self.timestep = timestep
        self.min_singular_value = min_singular_value
        super().__init__(
            f"stacked stage system near-singular at timestep {timestep} "
            f"(min singular value {min_singular_value:.3e})"
        )


class DegenerateGradientError(NumericalError):
    """Raised when a constraint gradient vanishes at the linearization point."""


class ScenarioError(InvalidInputError):
    """Raised when a scenario document fails schema or invariant validation."""
