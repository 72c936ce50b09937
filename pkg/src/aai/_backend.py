"""Kernel backend selection.

The compiled extension is preferred; the NumPy fallback is used when the
extension is not built or when ``AAI_PURE_PYTHON`` is set to a non-empty value.
"""

import os

from . import _kernels_py

if os.environ.get("AAI_PURE_PYTHON"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _kernels_py

BACKEND = kernels.NAME


def available():
    """Return every importable kernel module, compiled first."""
    found = []
    try:
        from . import _kernels

        found.append(_kernels)
    except ImportError:
        pass
    found.append(_kernels_py)
    return found
