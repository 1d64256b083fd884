"""Kernel backend selection.

The compiled Cython kernels are preferred; the pure-Python module is a
drop-in fallback with identical semantics (and identical function names), so
everything above this layer is backend-agnostic.  Set ``NCENTRE_BACKEND=python``
to force the fallback, e.g. for the backend benchmark or debugging.
"""

import os

_forced = os.environ.get("NCENTRE_BACKEND", "").strip().lower()

if _forced == "python":
    from . import _kernels_py as kernels
elif _forced in ("cython", "compiled"):
    from . import _kernels_cy as kernels  # noqa: F401 - ImportError is the point
else:
    try:
        from . import _kernels_cy as kernels
    except ImportError:
        from . import _kernels_py as kernels


def backend_name():
    """"cython" when the compiled extension is active, else "python"."""
    return kernels.BACKEND
