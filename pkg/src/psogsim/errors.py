"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or parameters."""


class BoundaryError(ValueError):
    """A sensor sampling region falls outside the available image."""


class LeakageError(RuntimeError):
    """Target-subject data found in a pre-training pool."""


class TrainingDivergedError(RuntimeError):
    """Training produced non-finite losses or gradients."""
