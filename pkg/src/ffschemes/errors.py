"""Exception hierarchy shared by all modules."""


class FFSError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(FFSError, ValueError):
    pass


class UnsupportedConstellation(FFSError, ValueError):
    pass


class RotationUnavailable(FFSError, LookupError):
    pass


class InvalidBeamformer(FFSError, ValueError):
    pass


class BitrateMismatch(FFSError, ValueError):
    pass


class BitLengthError(FFSError, ValueError):
    pass


class InvalidDifference(FFSError, ValueError):
    pass


class EnumerationTooLarge(FFSError, RuntimeError):
    """An exhaustive search would exceed the configured enumeration cap."""

    def __init__(self, size, cap, what="enumeration"):
        self.size = size
        self.cap = cap
        super().__init__(f"{what} of size {size} exceeds cap {cap}")


class SlopeUndefined(FFSError, ValueError):
    pass


class SchemeFileError(FFSError, ValueError):
    pass
