"""Exception hierarchy shared across the package."""


class PCLMPError(Exception):
    """Base class for all package errors."""


class ZeroVector(PCLMPError, ValueError):
    pass


class DimMismatch(PCLMPError, ValueError):
    pass


class ShapeMismatch(DimMismatch):
    pass


class EmptyInput(PCLMPError, ValueError):
    pass


class InvalidConfig(PCLMPError, ValueError):
    pass


class ParseError(PCLMPError, ValueError):
    pass


class InsufficientClusters(PCLMPError, RuntimeError):
    pass


class InvalidParams(PCLMPError, ValueError):
    pass


class LengthMismatch(PCLMPError, ValueError):
    pass


class EmptyCluster(PCLMPError, ValueError):
    pass


class InvalidLabel(PCLMPError, ValueError):
    pass


class InvalidIndex(PCLMPError, IndexError):
    pass


class NonPositiveTau(PCLMPError, ValueError):
    pass


class EmptyMemory(PCLMPError, ValueError):
    pass


class InconsistentInput(PCLMPError, ValueError):
    pass


class NoRelevantItem(PCLMPError, ValueError):
    pass


class MissingGroundTruth(PCLMPError, ValueError):
    pass
