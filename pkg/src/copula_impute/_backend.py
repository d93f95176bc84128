"""Pick the E-step kernel at import time.

The compiled extension is used when it imports; setting
``COPULA_IMPUTE_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _kernels_py

kernel = _kernels_py
if not os.environ.get("COPULA_IMPUTE_PURE_PYTHON"):
    try:
        from . import _kernels as kernel  # noqa: F811
    except ImportError:
        kernel = _kernels_py

BACKEND = kernel.NAME
KERNELS = {_kernels_py.NAME: _kernels_py}
if kernel is not _kernels_py:
    KERNELS[kernel.NAME] = kernel


def get_kernel(name=None):
    """Kernel module by name (``"cython"`` / ``"python"``); default is the active one."""
    if name is None:
        return kernel
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(f"kernel {name!r} not available (have {sorted(KERNELS)})") from None
