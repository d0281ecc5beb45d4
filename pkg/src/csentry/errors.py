"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so keep the split between
configuration, data-format, and runtime failures intact.
"""


class CsentryError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CsentryError, ValueError):
    """Invalid configuration value or an inconsistent parameter combination."""


class DataError(CsentryError, ValueError):
    """Input data violates a precondition (shape, labels, emptiness)."""


class StratificationError(DataError):
    """A train/test split would leave one class empty on either side."""


class BalanceError(DataError):
    """Dataset class balance is outside the required 50% +/- 1% band."""


class ParseError(DataError):
    """Malformed line in an ingested log; carries line number and content."""

    def __init__(self, line_no: int, line: str, reason: str):
        self.line_no = line_no
        self.line = line
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}: {line!r}")


class UnusableLogError(DataError):
    """An ingested log yields too few complete intervals to form a trace."""


class FormatError(DataError):
    """A persisted artifact does not parse as its declared format."""


class VersionError(FormatError):
    """Artifact format version is newer than this implementation supports."""


class ChecksumError(FormatError):
    """Artifact content does not match its embedded checksum."""


class ShapeError(CsentryError, ValueError):
    """Tensor shapes are inconsistent with a layer or model contract."""


class UsageError(CsentryError, RuntimeError):
    """API misuse, e.g. backward() without a matching forward() cache."""


class NumericError(CsentryError, ArithmeticError):
    """A model produced non-finite values outside the training loop."""


class DivergenceError(CsentryError, RuntimeError):
    """Training produced a non-finite loss; carries epoch and batch index."""

    def __init__(self, epoch: int, batch: int):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
