"""Hot-loop kernels with a compiled backend and a pure-numpy fallback.

The compiled extension is used when it was built and importable. Set
``TILEFUSE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
ola_accumulate = _pykernels.ola_accumulate
bilinear_resize = _pykernels.bilinear_resize

if os.environ.get("TILEFUSE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        ola_accumulate = _ckernels.ola_accumulate
        bilinear_resize = _ckernels.bilinear_resize

__all__ = ["BACKEND", "ola_accumulate", "bilinear_resize"]
