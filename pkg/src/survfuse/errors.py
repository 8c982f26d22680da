"""Exception hierarchy shared across the package."""


class SurvfuseError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SurvfuseError):
    """Invalid configuration (bad dimensions, unknown variant, ...)."""


class DataError(SurvfuseError):
    """Cohort content cannot support the requested operation."""


class SchemaError(SurvfuseError):
    """A serialized file does not match the expected schema."""


class DimensionError(SurvfuseError):
    """Tensor shapes do not line up with the configured dimensions."""


class UndefinedMetricError(SurvfuseError):
    """A metric has no defined value on the given data (e.g. no comparable pairs)."""


class NumericError(SurvfuseError):
    """A non-finite value appeared where a finite one is required."""
