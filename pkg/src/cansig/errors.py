"""Exception hierarchy for the toolkit.

Every data-level failure raises a subclass of :class:`CansigError` so the CLI
can map them to exit code 1 with a machine-readable payload. Recoverable
per-line problems are collected as warnings by the parsers instead of raised.
"""


class CansigError(Exception):
    """Base class for all toolkit errors."""


class EmptyTrace(CansigError):
    """A log file produced zero valid frames."""


class MissingColumn(CansigError):
    """A CSV trace is missing a required header column."""


class TooFewFrames(CansigError):
    """Feature statistics need at least two (unpadded) frames."""


class InvalidRange(CansigError):
    """A bit range is empty or falls outside the payload."""


class NoActiveSignals(CansigError):
    """Threshold derivation got no positive labeling parameters."""


class SeriesTooShort(CansigError):
    """Time-series alignment needs at least two points per side."""


class NoTemplates(CansigError):
    """Template matching was invoked with an empty template set."""


class UnsupportedPid(CansigError):
    """A diagnostic PID outside the decodable request set."""


class ShortData(CansigError):
    """A diagnostic response carries fewer data bytes than its PID needs."""


class NoDefinitions(CansigError):
    """A DBC file contains no message (BO_) definitions."""


class MissingAnnotations(CansigError):
    """Label scoring in general mode requires a category sidecar."""


class NoOverlap(CansigError):
    """Inferred and ground-truth CAN ID sets are disjoint."""


class InvalidSpec(CansigError):
    """A synthetic-trace spec violates its own invariants."""
