"""Exception types shared across the package."""


class WaveblurError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(WaveblurError, ValueError):
    pass


class UnsupportedFilter(WaveblurError, ValueError):
    pass


class BandNotFound(WaveblurError, KeyError):
    pass


class BadSpec(WaveblurError, ValueError):
    pass


class TooLarge(WaveblurError, ValueError):
    pass


class MemoryGuard(WaveblurError, MemoryError):
    pass


class BadEpsilon(WaveblurError, ValueError):
    pass


class NonFiniteEnergy(WaveblurError, FloatingPointError):
    """Raised when the objective becomes NaN or infinite during iterations."""


class CorruptOperatorFile(WaveblurError, ValueError):
    pass


class BadImageFile(WaveblurError, OSError):
    pass
