"""Exception hierarchy shared by the simulator and the watermark toolkit."""


class RRWMError(Exception):
    """Base class for every error raised by this package."""


class CellFailureError(RRWMError):
    """A write or stress was attempted on a worn-out cell."""

    def __init__(self, address, stress_count=None, elapsed=None):
        self.address = address
        self.stress_count = stress_count
        self.elapsed = elapsed
        msg = f"cell at address {address:#x} has failed"
        if stress_count is not None:
            msg += f" (stress_count={stress_count})"
        super().__init__(msg)


class AddressError(RRWMError, IndexError):
    """Address or address range outside the device."""


class ImageFormatError(RRWMError):
    """Device image could not be parsed."""


class BadMagicError(ImageFormatError):
    pass


class VersionMismatchError(ImageFormatError):
    pass


class TruncatedImageError(ImageFormatError):
    pass


class LayoutError(RRWMError, ValueError):
    """Watermark layout is malformed, overlapping, or targets non-fresh cells."""


class BudgetExceededError(RRWMError, ValueError):
    """Requested stress budget is above the allowed fraction of rated endurance."""


class NonSeparableError(RRWMError):
    """Fresh and stressed calibration classes overlap.

    ``overlapping`` lists ``(fresh_group, stressed_group)`` index pairs whose
    values are on the wrong side of each other.
    """

    def __init__(self, message, overlapping=()):
        self.overlapping = list(overlapping)
        super().__init__(message)


class UnreadableBitError(RRWMError):
    """More than half the addresses backing a watermark bit have failed."""

    def __init__(self, bit_index, failed, total):
        self.bit_index = bit_index
        self.failed = failed
        self.total = total
        super().__init__(
            f"bit {bit_index} unreadable: {failed}/{total} addresses failed"
        )


class TemperatureRangeError(RRWMError, ValueError):
    """Operating temperature outside the rated range."""


class NotFreshError(LayoutError):
    """Target addresses were already stressed."""
