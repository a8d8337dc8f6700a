"""Exception types shared across the toolkit."""


class SpikeshotError(Exception):
    """Base class for every error raised by this package."""


class TruncatedRecord(SpikeshotError):
    """Binary payload length is not a whole number of records."""


class CoordinateOutOfRange(SpikeshotError):
    """Event coordinates fall outside the sensor geometry."""


class MalformedHeader(SpikeshotError):
    """Leading header bytes could not be parsed."""


class ParseError(SpikeshotError):
    """Malformed text input; carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class BadMagic(SpikeshotError):
    """Byte stream does not start with the expected magic / version."""


class DimensionMismatch(SpikeshotError):
    """Declared shapes disagree with each other or with the payload size."""


class NonFiniteValue(SpikeshotError):
    """NaN or infinity where only finite values are allowed."""


class ZeroRow(SpikeshotError):
    """A row with zero norm cannot be normalized."""


class AllZeroWeights(SpikeshotError):
    """Fusion weights must contain at least one positive entry."""


class LengthMismatch(SpikeshotError):
    """Paired sequences have different lengths."""


class EmptyEvaluation(SpikeshotError):
    """Accuracy is undefined for an empty sample set."""


class NonFiniteState(SpikeshotError):
    """Neuron state left the finite domain."""


class MissingForwardRecord(SpikeshotError):
    """Backward pass invoked without a recorded forward pass."""


class InsufficientSamples(SpikeshotError):
    """A class has fewer samples than the requested shot count."""


class NonFiniteLoss(SpikeshotError):
    """Training loss became NaN or infinite; aborting."""
