"""Exception hierarchy shared by all celltrace modules."""


class CellTraceError(Exception):
    """Base class for all celltrace errors."""


class ValidationError(CellTraceError):
    """Input violates a structural precondition (shape, symmetry, units)."""


class RangeError(CellTraceError):
    """A timepoint or index lies outside the dataset range."""


class NotFoundError(CellTraceError):
    """Referenced record is dead or was never allocated."""


class DuplicateError(CellTraceError):
    """The record to be created already exists."""


class StateError(CellTraceError):
    """Operation invoked in the wrong session or recorder state."""


class ExtractionFailedError(CellTraceError):
    """A trace session produced no usable local maxima."""


class StaleIndexError(CellTraceError):
    """A derived index no longer matches the graph version it was built from."""
