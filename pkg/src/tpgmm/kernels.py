"""Backend selection for the accumulation kernels.

The compiled extension is used when it imports cleanly; set
``TPGMM_FORCE_PYTHON=1`` to force the numpy fallback (used by the
benchmark and the backend-agreement test).
"""
import os

from . import _kernels_py

if os.environ.get("TPGMM_FORCE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels_cy as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
expit_vec = _impl.expit_vec
score_info = _impl.score_info
moment_pieces = _impl.moment_pieces


def backends():
    """All importable kernel backends, keyed by name."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels_cy

        out["cython"] = _kernels_cy
    except ImportError:
        pass
    return out
