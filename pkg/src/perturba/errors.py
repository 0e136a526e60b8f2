"""Exception hierarchy.

Two families matter for the command line: validation problems (malformed
or out-of-contract inputs, exit code 1) and hypothesis failures (the
input is structurally fine but too far from the structured set for the
correction to be certified, exit code 2).
"""

from __future__ import annotations


class PerturbaError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(PerturbaError):
    """Input violates a precondition that no amount of correction fixes."""


class DimensionMismatch(ValidationError):
    pass


class NotHermitian(ValidationError):
    pass


class NotSkewHermitian(ValidationError):
    pass


class NotProjection(ValidationError):
    pass


class NotPartialIsometry(ValidationError):
    pass


class DimensionOverflow(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class HypothesisError(PerturbaError):
    """A correction hypothesis failed; carries the pipeline stage name."""

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message if stage is None else f"[{stage}] {message}")
        self.stage = stage


class DefectTooLarge(HypothesisError):
    pass


class ProjectionsTooFar(HypothesisError):
    pass


class CompressionSingular(HypothesisError):
    pass


class RankMismatch(HypothesisError):
    pass


class NotRefined(HypothesisError):
    pass


class AmbiguousSupport(HypothesisError):
    pass


class SupportMismatch(HypothesisError):
    pass


class FrameMismatch(HypothesisError):
    pass
