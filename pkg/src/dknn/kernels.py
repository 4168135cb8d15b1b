"""Backend selection for the per-machine kernels.

The compiled distance kernel is used when it imports; set
``DKNN_PURE_PYTHON=1`` to force the numpy fallback.  Truncation always uses
numpy, whose SIMD partition beat a compiled version.
"""
from __future__ import annotations

import os

from ._kernels_py import smallest_keys

if os.environ.get("DKNN_PURE_PYTHON", "") not in ("", "0"):
    from ._kernels_py import distance_keys

    BACKEND = "python"
else:
    try:
        from ._kernels import distance_keys

        BACKEND = "compiled"
    except ImportError:
        from ._kernels_py import distance_keys

        BACKEND = "python"

__all__ = ["BACKEND", "distance_keys", "smallest_keys"]
