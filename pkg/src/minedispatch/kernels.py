"""Backend selection for the per-decision kernels.

The compiled extension is used when it imports; otherwise the pure-Python
versions are. Set ``MINEDISPATCH_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("MINEDISPATCH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

site_block = _impl.site_block
delayed_trucks = _impl.delayed_trucks
mlp_forward = _impl.mlp_forward

__all__ = ["BACKEND", "site_block", "delayed_trucks", "mlp_forward"]
