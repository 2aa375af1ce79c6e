"""Exception hierarchy. CLI exit codes hang off these classes."""


class TriclusterError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ContractError(TriclusterError, ValueError):
    """An argument violates an operation's precondition."""


class ValidityError(ContractError):
    """Blocks do not form a partition of ``range(n)``."""


class DegenerateInputError(ContractError):
    """Input is well-formed but numerically degenerate (zero window, zero variance)."""


class InsufficientHistoryError(ContractError):
    """Fewer observations than the window requires."""


class CapacityError(TriclusterError):
    """Problem size is beyond an enumeration or search guard."""

    exit_code = 3
