"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback is loaded. ``SISINDEX_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("SISINDEX_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

l2_rows = _impl.l2_rows
cosine_rows = _impl.cosine_rows
keypoint_counts = _impl.keypoint_counts
union_blocks = _impl.union_blocks
nearest_centroid = _impl.nearest_centroid


def backends():
    """All importable kernel modules keyed by name (for tests and benchmarks)."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
