"""Multi-view state-action recognition with gated mixture-of-experts fusion."""

from .errors import ConfigurationError, NumericsError, UsageError
from .rng import Rng
from .tensor import Parameter, Tape, Tensor

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "NumericsError",
    "UsageError",
    "Parameter",
    "Rng",
    "Tape",
    "Tensor",
    "__version__",
]
