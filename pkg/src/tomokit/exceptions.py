"""Exception hierarchy shared by every tomokit module."""

from __future__ import annotations


class TomographyError(ValueError):
    """Base class for all tomokit errors."""


class InvalidDimension(TomographyError):
    pass


class NotHermitian(TomographyError):
    pass


class InvalidIndex(TomographyError, IndexError):
    pass


class DegenerateSpectrum(TomographyError):
    """Eigen-system too close to degenerate/defective for perturbation formulas."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class NotTomographicallyComplete(TomographyError):
    def __init__(self, message: str, condition_number: float = float("inf")):
        super().__init__(message)
        self.condition_number = condition_number


class ZeroFlux(TomographyError):
    pass


class UnsupportedSize(TomographyError):
    pass


class ZeroParametrization(TomographyError):
    pass


class SingularInverse(TomographyError):
    pass


class NotConverged(TomographyError):
    """Optimizer hit its evaluation cap; ``result`` holds the best point found."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class NotPhysical(TomographyError):
    def __init__(self, message: str, min_eigenvalue: float = float("nan")):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class DegenerateConcurrence(TomographyError):
    pass


class EofDerivativeSingular(TomographyError):
    pass


class ParseError(TomographyError):
    """Malformed counts file. ``row`` is 1-based (header is row 1)."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.row = row
        self.column = column
