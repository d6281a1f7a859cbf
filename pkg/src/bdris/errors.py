"""Exception types shared across the package."""


class BdrisError(Exception):
    """Base class for all package errors."""


class StructuralError(BdrisError, ValueError):
    """Wrong shapes, bad index sets or otherwise malformed arguments."""


class ConstraintViolationError(BdrisError, ValueError):
    """A switch configuration breaks the hardware matching constraint."""


class DegenerateCavityError(BdrisError, ArithmeticError):
    """``I - S_SS S_L`` is numerically singular (lossless resonance)."""


class ValidationError(BdrisError, ValueError):
    """Data violates reciprocity/passivity or grid invariants.

    ``indices`` lists the offending frequency indices, when known.
    """

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class ParseError(BdrisError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.field = field


class OptimizationError(BdrisError, ArithmeticError):
    """Every optimizer restart was discarded."""
