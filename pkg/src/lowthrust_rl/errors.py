"""Exception types raised across the package."""


class UnboundOrbitError(ValueError):
    """Cartesian state with non-negative specific energy."""


class GravityFileError(ValueError):
    """Malformed or incomplete spherical-harmonic coefficient file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class IntegrationError(RuntimeError):
    """The adaptive integrator could not meet its tolerance at the minimum step."""


class PropellantExhaustedError(IntegrationError):
    """Mass reached zero during a burn."""


class EpisodeDoneError(RuntimeError):
    """``step`` was called on an environment whose episode already ended."""


class DivergenceError(FloatingPointError):
    """A training loss became non-finite."""


class CheckpointError(ValueError):
    """Checkpoint file missing, corrupt or of an unsupported version."""
