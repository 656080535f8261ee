"""Exception hierarchy shared by all modules."""


class NetSPDEError(Exception):
    """Base class for every error raised by the package."""


# graph
class InvalidVertexIndex(NetSPDEError, ValueError):
    pass


class DisconnectedGraph(NetSPDEError, ValueError):
    pass


class EmptyEdgeList(NetSPDEError, ValueError):
    pass


class SelfLoop(NetSPDEError, ValueError):
    pass


# spatial
class NonPositiveCoefficient(NetSPDEError, ValueError):
    pass


class TraceMismatch(NetSPDEError, ValueError):
    pass


# delay
class HorizonMismatch(NetSPDEError, ValueError):
    pass


class StepNotMultipleOfDelayGrid(NetSPDEError, ValueError):
    pass


class NonPositiveT0(NetSPDEError, ValueError):
    pass


# semigroup
class NonFiniteEntries(NetSPDEError, ValueError):
    pass


class EigenFailure(NetSPDEError, RuntimeError):
    pass


# sde
class ShapeMismatch(NetSPDEError, ValueError):
    pass


class BlowupDetected(NetSPDEError, FloatingPointError):
    pass


# control
class EmptyControlDomain(NetSPDEError, ValueError):
    pass


# cli / config
class ConfigParseError(NetSPDEError):
    pass


class ValidationError(NetSPDEError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class ComputeError(NetSPDEError):
    """Wraps a module error raised while a command was running."""
