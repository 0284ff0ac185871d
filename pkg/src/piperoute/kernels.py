"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy/pure-Python ``_pykernels`` fallback is used. Set
``PIPEROUTE_KERNELS=python`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

_FORCED = os.environ.get("PIPEROUTE_KERNELS", "").strip().lower()

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

if _FORCED == "python" or _ckernels is None:
    impl = _pykernels
else:
    impl = _ckernels

BACKEND = impl.NAME


def available():
    """Names of the backends importable in this environment."""
    return ["cython", "python"] if _ckernels is not None else ["python"]


def get(name):
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
