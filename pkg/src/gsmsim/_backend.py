"""Selects the compiled kernels at import, with a pure-Python fallback.

Set GSMSIM_PURE_PYTHON=1 to force the fallback (used by the benchmark
and by tests that compare the two implementations).
"""

import os

kernels = None
if os.environ.get("GSMSIM_PURE_PYTHON", "0") != "1":
    try:
        from . import _kernels as kernels  # noqa: F401
    except ImportError:
        kernels = None

HAVE_KERNELS = kernels is not None
