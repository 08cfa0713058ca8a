"""Exception types raised by the balayage package."""


class BalayageError(Exception):
    """Base class for all package errors."""


class GeometryError(BalayageError, ValueError):
    pass


class DegenerateGeometryError(GeometryError):
    """Zero-volume box, coincident points, or similar degeneracy."""


class UnsupportedDimensionError(GeometryError):
    pass


class SpaceMismatchError(BalayageError, ValueError):
    """Two objects refer to different discrete spaces."""


class KernelDomainError(BalayageError, ValueError):
    """A point lies outside the domain of the kernel."""


class MatrixTooLargeError(BalayageError, ValueError):
    pass


class EnergyPrincipleError(BalayageError):
    """The assembled Gram matrix is not strictly positive definite."""

    def __init__(self, index, pivot):
        self.index = index
        self.pivot = pivot
        super().__init__(
            f"energy principle violated: Cholesky pivot {pivot:.6g} at index {index} is not positive"
        )


class ConvergenceError(BalayageError):
    """The solver hit its iteration limit before meeting the KKT tolerance.

    ``best`` holds the best iterate found and ``residuals`` its relative
    KKT residuals, so callers can still inspect the partial answer.
    """

    def __init__(self, message, best=None, residuals=None, iterations=0):
        super().__init__(message)
        self.best = best
        self.residuals = residuals or {}
        self.iterations = iterations


class NotNestedError(BalayageError, ValueError):
    pass
