"""Kernel backend selection.

The hot loops (slit projection, exact nearest-neighbor queries) exist twice:
a compiled Cython extension (``_native``) and a pure-numpy fallback
(``_fallback``). The native module is preferred when it imported cleanly;
selection can be forced with MCOP_KERNELS=native|fallback|auto. Both
backends implement the same candidate test in the same operation order, so
projection output is bit-identical across them.
"""

from __future__ import annotations

import os

from . import _fallback

try:
    from . import _native
except ImportError:  # extension not built: pure-python install
    _native = None


def available_backends() -> dict:
    out = {"fallback": _fallback}
    if _native is not None:
        out["native"] = _native
    return out


def _select():
    want = os.environ.get("MCOP_KERNELS", "auto").strip().lower()
    if want == "fallback":
        return "fallback", _fallback
    if want == "native":
        if _native is None:
            raise ImportError(
                "MCOP_KERNELS=native but the compiled extension is unavailable"
            )
        return "native", _native
    if _native is not None:
        return "native", _native
    return "fallback", _fallback


BACKEND, _impl = _select()

project_columns = _impl.project_columns
nearest_dists = _impl.nearest_dists
