"""Exception hierarchy shared by every subpackage."""


class PtmFuseError(Exception):
    """Base class for all library errors."""


class DimensionError(PtmFuseError, ValueError):
    """Operand shapes are incompatible."""


class NumericError(PtmFuseError, ArithmeticError):
    """A forward value became NaN or infinite."""


class UsageError(PtmFuseError, ValueError):
    """An API was called outside its contract."""


class ConfigError(PtmFuseError, ValueError):
    """An invalid configuration value."""


class InputError(PtmFuseError, ValueError):
    """Malformed user input (sequence, TSV, FASTA)."""


class FormatError(PtmFuseError, ValueError):
    """A binary file does not match the expected layout."""


class DivergenceError(PtmFuseError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")
