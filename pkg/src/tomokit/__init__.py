"""Two-qubit polarisation tomography: linear and maximum-likelihood estimates with error bars."""

__version__ = "0.1.0"

from .counts import CountRecord  # noqa: E402
from .linear import DensityMatrix, build_tomography_set, linear_reconstruct  # noqa: E402
from .mle import OptimizerOptions, mle_reconstruct  # noqa: E402
from .projection import default_states  # noqa: E402

__all__ = [
    "CountRecord",
    "DensityMatrix",
    "OptimizerOptions",
    "build_tomography_set",
    "linear_reconstruct",
    "mle_reconstruct",
    "default_states",
]
