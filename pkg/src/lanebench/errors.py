"""Exception hierarchy shared across the toolkit."""


class LanebenchError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(LanebenchError):
    """Input violates a documented invariant."""


class ParseError(LanebenchError):
    """Malformed serialized input (carries file/line context in the message)."""


class SideMissingError(LanebenchError):
    """No lane line found on one side of the vehicle."""

    def __init__(self, side, message=None):
        self.side = side
        super().__init__(message or f"no lane line on side: {side}")


class NoPathError(LanebenchError):
    """No usable lane lines at all; a desired path cannot be built."""


class DegenerateProjectionError(LanebenchError):
    """Pixel at/above the horizon; homography projection is undefined."""


class EmptyProjectionError(LanebenchError):
    """All points of a polyline were degenerate under projection."""


class DetectorUnavailableError(LanebenchError):
    """External detector endpoint unreachable or timed out."""


class ProtocolError(LanebenchError):
    """External detector violated the wire protocol."""


class GenerationFailureError(LanebenchError):
    """Ground-truth road-center generation diverged."""


class EvaluationFailureError(LanebenchError):
    """Rollout aborted (e.g. detector failed on too many steps)."""

    def __init__(self, message, partial_trace=None):
        self.partial_trace = partial_trace
        super().__init__(message)


class UndefinedMetricError(LanebenchError):
    """Metric has no defined value on this input (e.g. empty ground truth)."""


class InsufficientDataError(LanebenchError):
    """Too few samples for a statistic."""
