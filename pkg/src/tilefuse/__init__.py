"""Multi-scale window tiling, overlap-add stitching and gated detail fusion."""
from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
