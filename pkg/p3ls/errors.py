"""Exceptions raised across the p3ls package.

Every domain error is a ``ValueError`` so callers that already guard numeric
input with ``except ValueError`` keep working.
"""

from typing import Optional


class P3lsError(ValueError):
    """Base class for all p3ls errors."""


class DimensionMismatch(P3lsError):
    """Matrix shapes are inconsistent with each other or with the model."""


class NonFiniteValues(P3lsError):
    """A matrix handed to the public API contains NaN or Inf."""


class TooFewRows(P3lsError):
    """Not enough samples for the requested operation."""


class ZeroVarianceColumn(P3lsError):
    """A column has zero sample variance and cannot be standardized."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"Column {index} has zero sample variance")


class RankDeficient(P3lsError):
    """The cross-product matrix vanished before all components were extracted."""

    def __init__(self, extracted: int, requested: int):
        self.extracted = extracted
        self.requested = requested
        super().__init__(
            f"Cross-product matrix is numerically zero after {extracted} of "
            f"{requested} components"
        )


class SingularRotation(P3lsError):
    """P^T W is not (numerically) invertible."""


class InvalidDim(P3lsError):
    """A requested matrix dimension is not a positive count."""


class MaskGenerationFailed(P3lsError):
    """No well-conditioned random mask was found within the retry budget."""


class WrongBlockCount(P3lsError):
    """The number of masked blocks does not match the federation."""


class SingularLocalMask(P3lsError):
    """A party's local mask could not be inverted during recovery."""


class VisibilityViolation(P3lsError):
    """A party asked for a model component it is not entitled to see."""


class NotTrained(P3lsError):
    """Inference or contribution was requested before training finished."""


class UnknownDataset(P3lsError):
    """A built-in dataset id outside 1..5 was requested."""


class ProtocolError(P3lsError):
    """A protocol step failed; records which party and phase it happened in."""

    def __init__(self, message: str, origin: str, phase: Optional[str] = None):
        self.origin = origin
        self.phase = phase
        where = f"{origin}" if phase is None else f"{origin} during {phase}"
        super().__init__(f"[{where}] {message}")


class ExperimentError(P3lsError):
    """A repetition of an experiment failed."""

    def __init__(self, message: str, repetition: int, phase: str):
        self.repetition = repetition
        self.phase = phase
        super().__init__(f"Repetition {repetition} failed in {phase}: {message}")
