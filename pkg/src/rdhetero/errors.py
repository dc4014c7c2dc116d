"""Exception and warning types shared across the package."""


class RdheteroError(Exception):
    """Base class for every error this package raises on purpose."""


class MissingColumn(RdheteroError):
    """A named column is not present in the input file."""


class NonNumericScore(RdheteroError):
    """A column that must be numeric (score, outcome, efficiency, cluster)
    contains a value that does not parse as a number."""


class EmptyAfterDeletion(RdheteroError):
    """Listwise deletion removed every row."""


class UnknownColumn(RdheteroError):
    """A covariate expression refers to a column that does not exist."""


class MalformedExpression(RdheteroError):
    """A covariate or combination expression does not follow the grammar."""


class NonpositiveBandwidth(RdheteroError):
    """Bandwidth must be strictly positive."""


class DimensionMismatch(RdheteroError):
    """Inputs that must share a dimension do not."""


class AllColumnsDropped(RdheteroError):
    """Collinearity elimination removed every design column."""


class InsufficientObservations(RdheteroError):
    """Too few effective observations to fit the requested model."""


class GroupTooSmall(InsufficientObservations):
    """A subgroup has too few observations on one side of the cutoff."""


class DegenerateScore(RdheteroError):
    """The score variable has no usable variation."""


class UnknownLabel(RdheteroError):
    """A linear combination refers to an effect row that was not estimated."""


class EmptyCombo(RdheteroError):
    """A linear combination has no nonzero coefficient."""


class SingularContrastCovariance(RdheteroError):
    """The covariance of the requested contrasts cannot be inverted."""


class SingularClusterBlockWarning(UserWarning):
    """A cluster block adjustment was not invertible; the unadjusted
    residuals were used for that cluster instead."""
