"""Exception types raised across the package."""


class SyncLabError(Exception):
    """Base class for all package errors."""


class NoSpanningTree(SyncLabError, ValueError):
    pass


class DimensionMismatch(SyncLabError, ValueError):
    pass


class NonFinite(SyncLabError, ArithmeticError):
    pass


class InvalidConfig(SyncLabError, ValueError):
    pass


class PreconditionViolated(SyncLabError, ValueError):
    pass


class InvalidInitialDiameter(SyncLabError, ValueError):
    pass


class DegenerateParameters(SyncLabError, ValueError):
    """Admissible constants exist in principle but are not representable."""


class Infeasible(SyncLabError, ValueError):
    pass


class InsufficientSamples(SyncLabError, ValueError):
    pass


class DegenerateData(SyncLabError, ValueError):
    """Frequency diameter already at zero; nothing to fit."""


class OutputUnwritable(SyncLabError, OSError):
    pass
