"""Backend selection for the hidden-state recursion.

The compiled kernel is used when it was built and ``ESNFI_PURE_PYTHON`` is
unset. Both backends agree to within a few ulps; results from a single
backend are bit-reproducible.
"""

import os

from esnfi import _recur_py

BACKEND = "python"
recur_batch = _recur_py.recur_batch

if not os.environ.get("ESNFI_PURE_PYTHON"):
    try:
        from esnfi._recur import recur_batch  # noqa: F811
    except ImportError:
        pass
    else:
        BACKEND = "cython"

__all__ = ["BACKEND", "recur_batch"]
