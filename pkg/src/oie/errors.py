"""Exception hierarchy shared by all modules."""


class OIEError(Exception):
    """Base class for every error raised by this package."""


# path geometry
class PathTooShort(OIEError):
    pass


class DegeneratePolyline(OIEError):
    pass


class IndexOutOfStencil(OIEError):
    pass


class VerticalTangent(OIEError):
    pass


class ZeroVelocity(OIEError):
    pass


# scenario simulation
class InvalidConfig(OIEError):
    pass


# tracklets / features
class InvalidNoise(OIEError):
    pass


class NoPredecessor(OIEError):
    pass


class DimensionMismatch(OIEError):
    pass


# model
class EmptyBatch(OIEError):
    pass


class NonFiniteGradient(OIEError):
    pass


# evaluation
class NoPositives(OIEError):
    pass


class UnknownBaseline(OIEError):
    pass


class LengthMismatch(OIEError):
    pass


# cli / pipeline
class MissingPrerequisite(OIEError):
    pass


class ProvenanceMismatch(OIEError):
    pass


class UnknownKind(OIEError):
    pass


class IoFailure(OIEError):
    pass
