"""Exception hierarchy shared by all modules."""
from __future__ import annotations


class AnisocalError(Exception):
    """Base class for every error raised by the package."""


class NotSPD(AnisocalError, ValueError):
    pass


class DimensionTooSmall(AnisocalError, ValueError):
    pass


class CoincidentPoints(AnisocalError, ValueError):
    pass


class InvalidParameter(AnisocalError, ValueError):
    pass


# geometry / meshing
class OutsidePatch(AnisocalError, ValueError):
    pass


class BrokenChain(AnisocalError):
    pass


class FlatInterface(AnisocalError):
    def __init__(self, message: str, interface: int | None = None):
        super().__init__(message)
        self.interface = interface


class ResolutionTooCoarse(AnisocalError, ValueError):
    pass


# forward solver
class SingularSystem(AnisocalError):
    pass


class PatchNotFound(AnisocalError, KeyError):
    pass


class EpsilonUnresolved(AnisocalError, ValueError):
    pass


class PointsTooClose(AnisocalError, ValueError):
    pass


# recovery
class InsufficientDirections(AnisocalError, ValueError):
    pass


class FitDiverged(AnisocalError):
    pass


class NonUniqueConstraints(AnisocalError):
    """Constraint system is rank deficient; carries the null space instead of a guess."""

    def __init__(self, message: str, rank: int, nullspace: list, singular_values=None):
        super().__init__(message)
        self.rank = rank
        self.nullspace = nullspace
        self.singular_values = singular_values


class ChainOrderViolation(AnisocalError):
    pass


class PointsInE(AnisocalError, ValueError):
    pass


# experiments
class ConfigInvalid(AnisocalError, ValueError):
    pass


class CheckFailed(AnisocalError):
    pass


class SeriesNotFound(AnisocalError, KeyError):
    pass
