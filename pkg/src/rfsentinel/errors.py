"""Exception hierarchy shared by every stage of the pipeline."""


class RfSentinelError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(RfSentinelError, ValueError):
    """A precondition on an argument was violated."""


class FileFormatError(RfSentinelError):
    """A dataset, model or capture file does not match its declared format."""


class NumericError(RfSentinelError, ArithmeticError):
    """A numerical or model-fitting step could not produce a valid result."""


class UnreliablePhaseError(NumericError):
    pass


class AliasingError(NumericError):
    pass


class NoSignalFoundError(NumericError):
    pass


class NoTransitionsError(NumericError):
    pass


class NoTransientError(NumericError):
    pass


class DegenerateSegmentError(NumericError):
    pass


class ConstantFeatureError(NumericError):
    pass


class NotFittedError(RfSentinelError, RuntimeError):
    """A model was used before it was fitted."""
