"""Exception types raised across the package."""


class ClusteredSamplingError(Exception):
    """Base class for all package errors."""


class BadMagic(ClusteredSamplingError):
    pass


class CountMismatch(ClusteredSamplingError):
    pass


class TruncatedFile(ClusteredSamplingError):
    pass


class PoolExhausted(ClusteredSamplingError):
    pass


class InvalidAllocation(ClusteredSamplingError, ValueError):
    """An allocation matrix violates the row/column sum invariants."""


class LeafOverCapacity(ClusteredSamplingError):
    pass


class DegenerateConfig(ClusteredSamplingError):
    pass


class DimensionMismatch(ClusteredSamplingError, ValueError):
    pass
