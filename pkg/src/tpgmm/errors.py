"""Exception types shared across the package."""


class TpgmmError(Exception):
    """Base class for all package errors."""


class RankDeficientError(TpgmmError):
    """Design matrix is rank deficient among the weighted rows."""


class SeparationError(TpgmmError):
    """Logistic likelihood is maximized at infinity (perfect separation)."""


class NonConvergence(TpgmmError):
    """Iteration limit reached before the convergence criterion was met."""


class DimensionError(TpgmmError):
    """Matrix/vector dimensions do not agree."""


class InsufficientCellError(TpgmmError):
    """A phase-II quota exceeds the number of available rows in its cell."""


class EmptyCellError(TpgmmError):
    """A (y, s) cell referenced by the design has no phase-I rows."""


class SingularNormalEquations(TpgmmError):
    """G'CG is numerically singular inside the Gauss-Newton step."""


class SingularBread(TpgmmError):
    """The bread matrix of the sandwich is numerically singular."""


class UnattainableCorrelation(TpgmmError):
    """No latent normal correlation reproduces the requested target."""


class ParseError(TpgmmError):
    """An input file could not be parsed."""


class JoinError(TpgmmError):
    """Phase-II rows reference ids absent from phase-I."""


class DesignValidationError(TpgmmError):
    """The sampling design is inconsistent with the data."""
