"""Exception hierarchy for servoshape.

Every error raised by the library derives from :class:`ServoShapeError` so
callers (notably the CLI) can map failures onto exit codes without pattern
matching on messages.
"""

from __future__ import annotations


class ServoShapeError(Exception):
    """Base class for all servoshape errors."""


class InvalidInputError(ServoShapeError, ValueError):
    """An argument violates a documented precondition or invariant."""


class ConfigError(ServoShapeError):
    """A project configuration file is missing, malformed, or inconsistent."""


class InsufficientDataError(ServoShapeError):
    """A record is too short for the requested spectral estimate."""

    def __init__(self, message: str, minimum_samples: int | None = None):
        super().__init__(message)
        self.minimum_samples = minimum_samples


class DivergenceError(ServoShapeError):
    """A simulation state grew without bound."""

    def __init__(self, message: str, sample_index: int):
        super().__init__(message)
        self.sample_index = sample_index


class FrequencyRangeError(ServoShapeError, ValueError):
    """A requested frequency lies outside the usable grid or band."""


class GridError(ServoShapeError):
    """Frequency responses cannot be combined because their grids are disjoint."""


class SamplingError(ServoShapeError):
    """A design frequency is too close to the Nyquist rate to realize."""


class NotchDesignError(ServoShapeError):
    """The requested notch parameters have no realizable filter."""


class NoCrossoverError(ServoShapeError):
    """The response phase never crosses -180 deg, so margin reads are undefined."""


class InfeasibleMarginError(ServoShapeError):
    """No frequency satisfies the amplitude-margin placement condition."""


class PhaseInfeasibleError(ServoShapeError):
    """The phase read at the placement frequency admits no positive integral time."""


class NonConvergenceError(ServoShapeError):
    """The tuning iteration exhausted its budget; carries the best attempt."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class NoOscillationError(ServoShapeError):
    """A relay experiment produced no sustained limit cycle."""
