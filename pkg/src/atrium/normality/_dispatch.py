"""Kernel backend selection.

The compiled extension is preferred when importable; setting the
environment variable ATRIUM_PURE_PY forces the NumPy fallback.  Both
backends expose `splat` and `score_step` with identical contracts.
"""

import os

from . import _kernels_py

if os.environ.get("ATRIUM_PURE_PY"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKENDS = {"python": _kernels_py}
try:
    from . import _kernels_cy

    BACKENDS["cython"] = _kernels_cy
except ImportError:
    pass

ACTIVE_BACKEND = _impl.BACKEND
splat = _impl.splat
score_step = _impl.score_step


def get_backend(name: str):
    """Kernel module for an explicit backend name ('python' or 'cython')."""
    if name == "auto":
        return _impl
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} not available (have {sorted(BACKENDS)})")
    return BACKENDS[name]
