"""Exception types shared across the package.

Every error raised on bad data derives from ProbeError so the CLI can map
data problems to exit code 1 while genuine usage errors stay exit code 2.
"""

from __future__ import annotations


class ProbeError(Exception):
    """Base class for all data-level errors."""


class ParseError(ProbeError):
    def __init__(self, position: int, reason: str):
        self.position = position
        self.reason = reason
        super().__init__(f"parse error at position {position}: {reason}")


class FormatError(ProbeError):
    """Malformed input file (wrong schema, bad JSON, bad span)."""


class SpanNotANode(ProbeError):
    """A span argument does not correspond to any node of the tree."""


class NotBinary(ProbeError):
    """Operation requires a strictly binary tree."""


class UnknownSentence(ProbeError):
    """Sentence id not present in the bank."""


class EmptyPool(ProbeError):
    """No sentence or span satisfies the sampling predicate."""


class InsufficientPool(ProbeError):
    """Fewer qualifying items than requested trials."""


class PoolError(ProbeError):
    """A balanced design cannot be filled from the given pools."""


class UnknownTemplate(ProbeError):
    """No prompt template registered for (template_id, lang)."""


class TransportError(ProbeError):
    """Network failure talking to an LLM endpoint, after retries."""


class ApiError(ProbeError):
    """Non-retryable error response from an LLM endpoint."""

    def __init__(self, message: str, status: int | None = None,
                 body: str = ""):
        super().__init__(message)
        self.status = status
        self.body = body


class SpecError(ProbeError):
    """Malformed agent specification string."""


class SchemaError(ProbeError):
    """Session file row missing required keys or not valid JSON."""


class UnknownTrial(ProbeError):
    """Response refers to a trial id absent from the trials file."""


class DuplicateResponse(ProbeError):
    """More than one answer for the same trial within one session."""


class MissingTargetSpan(ProbeError):
    """Trial lacks the target_span required by the analysis."""


class NoConstituentTests(ProbeError):
    """Rule ratios are undefined: no constituent-class records."""


class StatsError(ProbeError):
    """Base class for statistics errors."""


class InvalidP(StatsError):
    """p-value outside (0, 1]."""


class DegenerateError(StatsError):
    """Zero error variance; the test statistic is undefined."""


class ShapeError(StatsError):
    """Input matrix has the wrong shape."""


class TooFewSamples(StatsError):
    """Not enough samples to resample."""


class EmptyGroup(StatsError):
    """A comparison group is empty."""


class SizeMismatch(StatsError):
    """Paired comparison groups differ in length."""


class EmptyList(ProbeError):
    """An aggregate over an empty collection."""


class LengthMismatch(ProbeError):
    """Two trees or a tree and a distribution differ in sentence length."""


class ConfigError(ProbeError):
    """A configuration file is unreadable or malformed."""


class ManifestError(ProbeError):
    """A run manifest is missing, malformed, or fails verification."""
