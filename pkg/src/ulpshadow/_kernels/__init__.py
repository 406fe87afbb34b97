"""Hot LU elimination kernels, with implementation selection at import.

The compiled Cython extension is preferred; the pure-Python/NumPy module is
a bit-identical fallback.  Set ULPSHADOW_PURE_PYTHON=1 to force the
fallback (used by the differential tests and the kernel benchmark).
"""

from __future__ import annotations

import os


class SingularMatrixError(ValueError):
    """A pivot was exactly zero: the matrix is singular to working precision."""


def _select():
    if os.environ.get("ULPSHADOW_PURE_PYTHON", "") not in ("", "0"):
        from . import _pykernels

        return _pykernels
    try:
        from . import _ckernels

        return _ckernels
    except ImportError:
        from . import _pykernels

        return _pykernels


_impl = _select()

IMPL = _impl.IMPL
lu_factor_plain = _impl.lu_factor_plain
lu_solve_plain = _impl.lu_solve_plain
lu_factor_fixed = _impl.lu_factor_fixed
lu_solve_fixed = _impl.lu_solve_fixed
lu_factor_cyclic = _impl.lu_factor_cyclic
lu_solve_cyclic = _impl.lu_solve_cyclic
lu_factor_dd = _impl.lu_factor_dd
lu_solve_dd = _impl.lu_solve_dd

__all__ = [
    "SingularMatrixError",
    "IMPL",
    "lu_factor_plain",
    "lu_solve_plain",
    "lu_factor_fixed",
    "lu_solve_fixed",
    "lu_factor_cyclic",
    "lu_solve_cyclic",
    "lu_factor_dd",
    "lu_solve_dd",
]
