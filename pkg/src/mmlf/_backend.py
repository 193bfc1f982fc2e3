"""Select the SGD kernel backend at import.

The compiled extension is used when it was built; set ``MMLF_BACKEND=python``
to force the pure-Python fallback.
"""
import os

from . import _kernels_py

kernels = _kernels_py
if os.environ.get("MMLF_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py

NAME = kernels.NAME
