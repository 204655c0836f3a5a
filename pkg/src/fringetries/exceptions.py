"""Errors raised by fringetries.

Everything subclasses ``FringeTriesError`` which is a ``ValueError``, so callers
that only know about ``ValueError`` keep working.
"""


class FringeTriesError(ValueError):
    """Base class for all domain errors."""


class UsageError(FringeTriesError):
    """Bad command-line input (unknown flag, unparsable value)."""


class InvalidSource(FringeTriesError):
    pass


class PrefixViolation(FringeTriesError):
    """A key set contains duplicates or a key that is a prefix of another."""


class DepthExceeded(FringeTriesError):
    """Two keys agree on ``depth`` characters; usually near-duplicate keys or a too-small bound."""

    def __init__(self, depth, replicate=None):
        self.depth = depth
        self.replicate = replicate
        message = f"keys agree on {depth} characters (max_depth reached)"
        if replicate is not None:
            message += f" in replicate {replicate}"
        super().__init__(message)

    def __reduce__(self):
        return type(self), (self.depth, self.replicate)


class InvalidPath(FringeTriesError):
    pass


class LimitExceeded(FringeTriesError):
    pass


class UnaryNode(FringeTriesError):
    pass


class ShapeDependence(FringeTriesError):
    pass


class EmptyTree(FringeTriesError):
    pass


class PoleAt(FringeTriesError):
    pass


class NonConvergent(FringeTriesError):
    pass


class Aperiodic(FringeTriesError):
    pass


class DegenerateVariance(FringeTriesError):
    pass


class InsufficientSamples(FringeTriesError):
    pass
