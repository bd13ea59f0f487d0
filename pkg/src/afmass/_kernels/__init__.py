"""Numerical kernel backends.

Two interchangeable implementations of the hot kernels live here: a Cython
extension (``_fast``) and a numpy interpreter (``pure``). Both execute the
same stack programs produced by :mod:`afmass.expressions`, so results agree
to the last bit up to floating-point reassociation. The compiled backend is
preferred when present; set ``AFMASS_PURE=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import pure

if os.environ.get("AFMASS_PURE"):
    _impl = pure
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = pure

BACKEND: str = _impl.NAME

eval_program = _impl.eval_program
hyp2f1_series = _impl.hyp2f1_series

__all__ = ["BACKEND", "eval_program", "hyp2f1_series", "pure"]
