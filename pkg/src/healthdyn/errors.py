"""Exception types shared across the package."""


class HealthDynError(Exception):
    """Base class for all package errors."""


class ConfigError(HealthDynError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class LoadError(HealthDynError, ValueError):
    """A file does not follow its documented schema."""


class IdentificationError(HealthDynError, ValueError):
    """Too little variation or too few periods to identify a model."""


class SingularDesignError(HealthDynError, ValueError):
    """Regressor matrix is rank deficient."""


class SeparationError(HealthDynError, ValueError):
    """An indicator perfectly separates the binary outcome."""


class InsufficientDataError(HealthDynError, ValueError):
    """Not enough observations for the requested estimator."""


class NumericalError(HealthDynError, RuntimeError):
    """An optimizer or solver failed to produce a usable answer."""


class DependencyError(HealthDynError, RuntimeError):
    """A pipeline step is missing an upstream artifact."""
