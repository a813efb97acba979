"""Exception types, one per failure contract.

The CLI maps these onto exit codes: configuration/input/usage problems are
exit 2, numerical-integrity aborts exit 3, I/O failures exit 4.
"""


class PadlabError(Exception):
    """Base class for all package errors."""


class DimensionError(PadlabError):
    """Operand shapes are incompatible."""


class ConfigurationError(PadlabError):
    """A configuration value is structurally invalid."""


class InputError(PadlabError):
    """A data argument is out of range or malformed."""


class UsageError(PadlabError):
    """An API was called outside its contract."""


class NumericalIntegrityError(PadlabError):
    """A numerical guarantee (finiteness, real-valuedness) was violated."""
