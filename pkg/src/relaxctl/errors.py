"""Exception types shared across the package."""


class RelaxctlError(Exception):
    """Base class for all package errors."""


class ValidationError(RelaxctlError, ValueError):
    """Raised when inputs violate a documented precondition."""


class PresetLookupError(RelaxctlError, KeyError):
    """Raised when an unknown model preset name is requested."""

    def __init__(self, name, available):
        self.name = name
        self.available = tuple(available)
        super().__init__(
            f"unknown model preset {name!r}; available: {', '.join(self.available)}"
        )

    def __str__(self):
        return self.args[0]


class SimulationError(RelaxctlError, RuntimeError):
    """Raised when a simulated state becomes non-finite or explodes.

    Carries the offending step and particle index for diagnosis.
    """

    def __init__(self, message, step=None, particle=None):
        super().__init__(message)
        self.step = step
        self.particle = particle
