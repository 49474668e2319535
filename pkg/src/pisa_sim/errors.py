"""Exception types shared across the simulator."""


class PisaError(Exception):
    """Base class for every error raised by this package."""


class ShapeMismatch(PisaError):
    """Operand shape does not match the device or layer geometry."""


class ModeError(PisaError):
    """Operation not permitted in the current sensor mode."""


class NotReset(PisaError):
    """Exposure requested while pixels still hold a previous frame."""


class WeightsUnprogrammed(PisaError):
    """Compute requested before any weights were programmed."""


class AddressOutOfRange(PisaError):
    """Row address outside the sub-array, or in a reserved region."""


class InvalidCount(PisaError):
    """Charge-sharing cell counts are inconsistent (n_ones > c_units)."""


class RowPairInvalid(PisaError):
    """Rows cannot be co-activated by the modified decoder."""


class CapacityExceeded(PisaError):
    """The requested schedule needs more compute rows than exist."""


class MissingCost(PisaError):
    """A tallied primitive has no entry in the cost table."""


class WorkloadMismatch(PisaError):
    """Reports being compared were produced from different workloads."""


class FormatError(PisaError):
    """Malformed input file. Carries the byte offset when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = "%s (byte offset %d)" % (message, offset)
        super().__init__(message)
        self.offset = offset


class DatasetMissing(PisaError):
    """A required dataset file is absent."""
