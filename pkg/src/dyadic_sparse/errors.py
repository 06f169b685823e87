"""Exception types raised across the package."""


class DyadicError(Exception):
    """Base class for every error raised by this package."""


class AncestorOutOfGrid(DyadicError, ValueError):
    """Requested ancestor lies above the root of the grid."""


class CubeNotInGrid(DyadicError, ValueError):
    """A cube address does not belong to the grid."""


class ZeroMassCube(DyadicError, ValueError):
    """An average/median was requested on a cube of zero measure."""


class NotNonnegative(DyadicError, ValueError):
    """A nonnegative function was required."""


class DegenerateMeasure(DyadicError, ValueError):
    """Every cell of the grid has zero mass."""


class NoMaximalCube(DyadicError, ValueError):
    """The collection has no cube containing all the others."""


class BadLambda(DyadicError, ValueError):
    """Oscillation parameter outside the open interval (0, 1/2)."""


class RootAboveHeight(DyadicError, ValueError):
    """The root average of |f| exceeds the Calderon-Zygmund height."""


class CoefficientOutOfRange(DyadicError, ValueError):
    """A martingale transform coefficient has absolute value above 1."""


class ZeroBmoNorm(DyadicError, ValueError):
    """The function has vanishing dyadic BMO norm."""


class GenInfeasible(DyadicError, ValueError):
    """A generator specification cannot be realised."""


class InstanceError(DyadicError, ValueError):
    """An instance document does not conform to the schema."""
