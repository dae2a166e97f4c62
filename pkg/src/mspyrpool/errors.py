"""Exception hierarchy shared by every module."""


class MSPyrPoolError(Exception):
    """Base class for all library errors."""


class ShapeError(MSPyrPoolError, ValueError):
    """Tensor or parameter extents do not conform."""


class SizeError(ShapeError):
    """Element count overflows the platform index type."""


class DomainError(MSPyrPoolError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericError(MSPyrPoolError, ArithmeticError):
    """A computation produced or received non-finite values."""


class FormatError(MSPyrPoolError, ValueError):
    """A file does not follow its declared binary or text layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ValidationError(MSPyrPoolError, ValueError):
    """Configuration violates one or more constraints.

    All violations are collected in ``violations`` so that callers can
    report them at once instead of failing on the first.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ContractError(MSPyrPoolError, RuntimeError):
    """A call-order or bookkeeping contract was broken (e.g. stale cache)."""
