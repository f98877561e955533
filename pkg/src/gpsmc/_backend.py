"""Select the kernel backend at import time.

The compiled module is preferred; set ``GPSMC_BACKEND=python`` to force the
numpy fallback (``GPSMC_BACKEND=compiled`` makes a missing extension an error).
"""
import os

from . import _pykernels

_requested = os.environ.get("GPSMC_BACKEND", "auto").lower()

if _requested == "python":
    kernels = _pykernels
else:
    try:
        from . import _ckernels as kernels
    except ImportError:
        if _requested == "compiled":
            raise
        kernels = _pykernels


def available_backends():
    """Names of importable backends, compiled first."""
    names = []
    try:
        from . import _ckernels  # noqa: F401
        names.append("compiled")
    except ImportError:
        pass
    names.append("python")
    return names


def get_backend(name):
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
