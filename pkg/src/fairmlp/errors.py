"""Exception hierarchy shared by all fairmlp modules.

The CLI maps these onto process exit codes: ParameterError and I/O
problems -> 2, SchemaError/DataError/DegenerateBatchError -> 3,
NumericError -> 4.
"""


class FairmlpError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FairmlpError):
    """Array dimensions or sequence lengths do not match."""


class ParameterError(FairmlpError):
    """A scalar argument is outside its valid range."""


class DegenerateBatchError(FairmlpError):
    """A batch is missing a sensitive group or a label class required
    by the requested constraint or loss."""


class DataError(FairmlpError):
    """A dataset-level problem: missing group/class, insufficient
    stratification cells, batch size larger than the dataset."""


class SchemaError(FairmlpError):
    """CSV header, schema file, or checkpoint dimensions are inconsistent
    with what was requested."""


class NumericError(FairmlpError):
    """A non-finite value (NaN/Inf) would escape a public operation."""
