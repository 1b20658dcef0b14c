"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures
onto its documented codes: 1 for bad input, 2 for an exceeded cap and 3 for
an internal invariant failure.
"""


class PWLNetError(Exception):
    exit_code = 1


# geometry
class GeometryError(PWLNetError):
    pass


class TooFewVerticesError(GeometryError):
    pass


class NonPlanarError(GeometryError):
    pass


class DegenerateError(GeometryError):
    pass


class LengthMismatchError(GeometryError):
    pass


# networks
class NetworkError(PWLNetError):
    pass


class DimMismatchError(NetworkError):
    pass


class UnsupportedLayerError(NetworkError):
    pass


class InvalidWeightIdError(NetworkError):
    pass


class NetworkFormatError(NetworkError):
    pass


# symbolic engine
class PartitionCapExceeded(PWLNetError):
    exit_code = 2


class OutsideDomainError(PWLNetError):
    pass


class DegeneratePartitionError(PWLNetError):
    pass


class InvariantError(PWLNetError):
    exit_code = 3


# patching
class EmptyIntervalError(PWLNetError):
    pass


class ActivationChangedError(PWLNetError):
    pass


class DegenerateFrontierError(PWLNetError):
    """A reachable piece collapsed to a segment or point outside the initial set."""

    exit_code = 3
