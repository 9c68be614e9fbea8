"""Kernel selection: the compiled ``_core`` extension when importable, else pure Python.

Set ``EMERGELAB_PURE=1`` to force the fallback.
"""
import os

from . import _pyimpl

if os.environ.get("EMERGELAB_PURE") == "1":
    _impl = _pyimpl
else:
    try:
        from . import _core as _impl
    except ImportError:  # extension not built
        _impl = _pyimpl

BACKEND = "cython" if _impl is not _pyimpl else "python"

transport = _impl.transport
best_swap = _impl.best_swap
add_costs = _impl.add_costs

BACKENDS = {"python": _pyimpl}
if BACKEND == "cython":
    BACKENDS["cython"] = _impl
else:
    try:
        from . import _core
        BACKENDS["cython"] = _core
    except ImportError:
        pass
