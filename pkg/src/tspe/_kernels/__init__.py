"""Hot node2vec kernels with a compiled backend and a pure-Python fallback.

The compiled module is used when it imports; set ``TSPE_PURE_PYTHON=1`` to
force the fallback.  ``BACKEND`` names the active one.
"""
import os

from . import _pure

if os.environ.get("TSPE_PURE_PYTHON", "") not in ("", "0"):
    _ext = None
else:
    try:
        from . import _ext
    except ImportError:
        _ext = None

BACKEND = "compiled" if _ext is not None else "python"
_impl = _ext if _ext is not None else _pure

random_walks = _impl.random_walks
skipgram_epoch = _impl.skipgram_epoch


def backend_module(name):
    """Return the kernel module for ``"compiled"`` or ``"python"``."""
    if name == "python":
        return _pure
    if name == "compiled":
        if _ext is None:
            raise ImportError("compiled kernels are not built")
        return _ext
    raise ValueError(f"unknown backend {name!r}")
