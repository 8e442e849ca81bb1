"""Pick the compiled kernels when available.

Set ``AIMSAT_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _pykernels

pure = _pykernels

if os.environ.get("AIMSAT_PURE_PYTHON", "") not in ("", "0"):
    kernels = _pykernels
    COMPILED = False
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]

        COMPILED = True
    except ImportError:  # extension not built
        kernels = _pykernels
        COMPILED = False

compiled = kernels if COMPILED else None
NAME = "cython" if COMPILED else "python"
