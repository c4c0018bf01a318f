"""Kernel backend selection.

The compiled extension is used when it was built and ``SHOPFORMER_PURE_PYTHON``
is unset; otherwise the numpy twins are used. Both expose the same functions.
"""

import os

from . import _kernels_py

try:
    if os.environ.get("SHOPFORMER_PURE_PYTHON"):
        raise ImportError("pure-python backend forced")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

kernels = _compiled if _compiled is not None else _kernels_py
NAME = "cython" if _compiled is not None else "python"


def available() -> dict:
    """Map backend name to kernel module for every backend importable here."""
    found = {"python": _kernels_py}
    if _compiled is not None:
        found["cython"] = _compiled
    return found


def use(name: str):
    """Switch the active backend; returns the previous name."""
    global kernels, NAME
    found = available()
    if name not in found:
        raise ValueError(f"backend {name!r} not available (have {sorted(found)})")
    prev = NAME
    kernels, NAME = found[name], name
    return prev
