"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid arguments: bad shapes, non-finite values, out-of-range parameters."""


class NotPSDError(InputError):
    """A matrix expected to be positive semi-definite has a clearly negative eigenvalue."""


class ParseError(InputError):
    """Malformed CSV input; carries the offending row and column when known."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class DivergenceError(ArithmeticError):
    """An iterative solver's residual blew up past the divergence guard."""

    def __init__(self, step, residual_norm, limit):
        super().__init__(
            f"residual norm {residual_norm:.3e} exceeded {limit:.3e} at step {step}"
        )
        self.step = step
        self.residual_norm = residual_norm
        self.limit = limit


class ConvergenceWarning(UserWarning):
    """An iterative solver hit its iteration cap before meeting its tolerance."""
