"""Exception and warning types raised across the package."""


class Chi2RegError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(Chi2RegError, ValueError):
    pass


class RankDeficient(Chi2RegError, ValueError):
    """Stacked operator ``[G; L]`` is numerically column-rank-deficient."""


class DecompositionFailure(Chi2RegError, RuntimeError):
    pass


class InvalidTruncation(Chi2RegError, ValueError):
    pass


class DivisionDegenerate(Chi2RegError, ZeroDivisionError):
    pass


class SingularSystem(Chi2RegError, RuntimeError):
    pass


class StationInsideCell(Chi2RegError, ValueError):
    pass


class DegenerateRay(Chi2RegError, ValueError):
    pass


class SelectorFailure(Chi2RegError, RuntimeError):
    """A parameter-selection routine failed inside an outer iteration."""

    def __init__(self, message, iteration=None):
        super().__init__(message if iteration is None else f"iteration {iteration}: {message}")
        self.iteration = iteration


class ConfigError(Chi2RegError, ValueError):
    pass


class NonConvergenceWarning(RuntimeWarning):
    pass


class DegenerateTraceWarning(RuntimeWarning):
    pass
