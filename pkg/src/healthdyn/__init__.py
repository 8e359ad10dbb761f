"""Health dynamics and a retirement-age life-cycle model of labor supply and saving."""

import os

# The TBB layer shipped with some numba wheels is too old and warns on first use.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"

from .errors import (ConfigError, DependencyError, HealthDynError, IdentificationError,  # noqa: E402
                     InsufficientDataError, LoadError, NumericalError, SeparationError,
                     SingularDesignError)

__all__ = ["ConfigError", "DependencyError", "HealthDynError", "IdentificationError",
           "InsufficientDataError", "LoadError", "NumericalError", "SeparationError",
           "SingularDesignError", "__version__"]
