"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``POOLAL_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from . import _pykernels

try:
    if os.environ.get("POOLAL_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

linear_greedy = _impl.linear_greedy
group_sqdiv = _impl.group_sqdiv
nl_greedy = _impl.nl_greedy

__all__ = ["BACKEND", "linear_greedy", "group_sqdiv", "nl_greedy"]
