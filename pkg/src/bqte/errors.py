"""Exception hierarchy. The CLI maps each class to an exit code."""


class BQTEError(ValueError):
    exit_code = 1


class DataError(BQTEError):
    """Malformed or unusable input data."""

    exit_code = 1


class ConfigError(BQTEError):
    """Invalid estimator or scenario configuration."""

    exit_code = 2


class ValidityRangeError(BQTEError):
    """Numeric failure, or a request outside the calibrated estimation range."""

    exit_code = 3
