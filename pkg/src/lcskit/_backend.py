"""Pick the compiled integrator when it is importable.

Set ``LCSKIT_PURE_PYTHON=1`` to force the numpy backend.
"""
import os

from . import _pykernels

ckernels = None
if os.environ.get("LCSKIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as ckernels
    except ImportError:  # extension not built
        ckernels = None

BACKEND = "cython" if ckernels is not None else "python"
