"""Hot-kernel dispatch.

The compiled extension ``diarmetric._kernels`` is used when it was built;
otherwise the numpy versions in ``_kernels_py`` are.  Setting
``DIARMETRIC_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _kernels_py

try:
    if os.environ.get("DIARMETRIC_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("compiled kernels disabled by environment")
    from . import _kernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

pairwise_sq_dists = _impl.pairwise_sq_dists
lloyd_assign = _impl.lloyd_assign
tuple_hinge = _impl.tuple_hinge

__all__ = ["BACKEND", "pairwise_sq_dists", "lloyd_assign", "tuple_hinge"]
