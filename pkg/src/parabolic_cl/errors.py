"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not line up."""


class ParameterError(ValueError):
    """A configuration or call parameter is out of its valid range."""


class TrainingError(RuntimeError):
    """Non-finite loss or gradient encountered during optimisation."""


class IngestionError(ValueError):
    """A dataset file is missing or malformed."""


class ConfigError(ValueError):
    """An experiment file could not be parsed."""
