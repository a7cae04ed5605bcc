"""Shared exception types."""


class BrandkitError(Exception):
    """Base class for all brandkit errors."""


class DataFormatError(BrandkitError):
    """A data file (annotations, taxonomy, results, config, index) is malformed."""


class IndexFormatError(DataFormatError):
    """An index file failed magic/version/CRC validation."""
