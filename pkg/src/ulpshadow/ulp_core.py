"""Bit-level IEEE-754 binary64 utilities: ULP sizes, ULP stepping and the
absolute / relative / ULP error metrics.

All functions operate on plain Python floats (binary64) and are pure; they
are safe for unrestricted concurrent use.
"""

from __future__ import annotations

import math
import struct

__all__ = [
    "DomainError",
    "UlpOverflowError",
    "NONFINITE_DIVERGENCE",
    "MAX_OFFSET_STEPS",
    "ulp_of",
    "ulp32_of",
    "ulp_distance",
    "offset_by_ulps",
    "err_abs",
    "err_rel",
    "err_ulp",
    "divergence_ulp",
]


class DomainError(ValueError):
    """Raised when an argument lies outside a function's domain."""


class UlpOverflowError(OverflowError):
    """Raised when ULP stepping would leave the finite binary64 range."""


#: Sentinel for "one side of a comparison is not finite": treated as maximal
#: error by every caller.  +inf orders above every finite error and survives
#: CSV/JSON round trips.
NONFINITE_DIVERGENCE = math.inf

#: Sanity bound on a single stepping request.
MAX_OFFSET_STEPS = 1 << 20

# Ordinal of the largest finite binary64 (0x7FEFFFFFFFFFFFFF).
_MAX_FINITE_ORDINAL = (0x7FF << 52) - 1
_INT64_MIN = -(1 << 63)

# Spacing of the subnormal range, also used as "ULP of zero".
_SUBNORMAL_SPACING = 5e-324
_MIN_NORMAL = 2.2250738585072014e-308  # 2**-1022


def _require_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise DomainError(f"finite binary64 required, got {v!r}")


def ulp_of(x: float) -> float:
    """Gap between |x| and the next representable value above it.

    For a normal x this is eps * 2**E with E the unbiased exponent of x.
    Zero and the subnormals all report the uniform subnormal spacing
    2**-1074, which keeps ULP-scale error metrics finite and monotone near
    zero.
    """
    _require_finite(x)
    if abs(x) < _MIN_NORMAL:
        return _SUBNORMAL_SPACING
    return math.ulp(x)


def ulp32_of(x: float) -> float:
    """binary32 spacing at |x|, as a binary64 value.

    Provided for sweep step sizing over programs whose interesting scale is
    single precision; inputs beyond the binary32 range are rejected.
    """
    _require_finite(x)
    ax = abs(x)
    if ax >= 3.402823466e38:
        raise DomainError(f"{x!r} is outside the binary32 range")
    if ax < 2.0**-126:
        return 2.0**-149
    _, e = math.frexp(ax)
    return math.ldexp(1.0, e - 24)


def _to_ordinal(x: float) -> int:
    """Monotone map from finite floats to integers; +0 and -0 share 0."""
    (i,) = struct.unpack("<q", struct.pack("<d", x))
    return i if i >= 0 else _INT64_MIN - i


def _from_ordinal(o: int) -> float:
    i = o if o >= 0 else _INT64_MIN - o
    (x,) = struct.unpack("<d", struct.pack("<q", i))
    return x


def ulp_distance(a: float, b: float) -> int:
    """Signed count of representable binary64 steps from a to b.

    Antisymmetric, zero for identical values, and +0/-0 are treated as the
    same point on the number line.
    """
    _require_finite(a, b)
    return _to_ordinal(b) - _to_ordinal(a)


def offset_by_ulps(x: float, n: int) -> float:
    """Value n representable steps away from x, in the direction of sign(n).

    Stepping follows the monotone ordering of the binary64 number line and
    crosses zero correctly.  Raises UlpOverflowError if the walk would leave
    the finite range, DomainError for non-finite x, and ValueError for
    |n| > MAX_OFFSET_STEPS.
    """
    _require_finite(x)
    if abs(n) > MAX_OFFSET_STEPS:
        raise ValueError(f"|n| = {abs(n)} exceeds the {MAX_OFFSET_STEPS} step bound")
    if n == 0:
        return x
    o = _to_ordinal(x) + n
    if abs(o) > _MAX_FINITE_ORDINAL:
        raise UlpOverflowError(f"stepping {x!r} by {n} ULPs leaves the finite range")
    return _from_ordinal(o)


def err_abs(truth: float, approx: float) -> float:
    """Absolute error |truth - approx|."""
    _require_finite(truth, approx)
    return abs(truth - approx)


def err_rel(truth: float, approx: float) -> float:
    """Relative error |truth - approx| / |truth|.

    Raises ZeroDivisionError at truth == 0; callers are expected to fall
    back to err_ulp there.
    """
    _require_finite(truth, approx)
    if truth == 0.0:
        raise ZeroDivisionError("relative error is undefined for a zero reference")
    return abs(truth - approx) / abs(truth)


def err_ulp(reference: float, other: float) -> float:
    """ULP-scale error |reference - other| / ulp_of(reference).

    The denominator always uses the first argument, so call sites must pass
    the trusted value first.  Any non-finite argument yields
    NONFINITE_DIVERGENCE.  +0 and -0 compare identical.
    """
    if not (math.isfinite(reference) and math.isfinite(other)):
        return NONFINITE_DIVERGENCE
    return abs(reference - other) / ulp_of(reference)


def _nonfinite_class(x: float) -> int:
    if math.isnan(x):
        return 2
    return 1 if x > 0 else -1  # +inf / -inf


def divergence_ulp(reference: float, other: float) -> float:
    """err_ulp extended with the non-finite comparison rules shared by every
    divergence report.

    Both values non-finite with the same classification (both NaN, both
    +inf, or both -inf) count as agreement (0.0); a finite value against a
    non-finite one is the sentinel; otherwise plain err_ulp.
    """
    ref_finite = math.isfinite(reference)
    oth_finite = math.isfinite(other)
    if ref_finite and oth_finite:
        return err_ulp(reference, other)
    if not ref_finite and not oth_finite:
        if _nonfinite_class(reference) == _nonfinite_class(other):
            return 0.0
        return NONFINITE_DIVERGENCE
    return NONFINITE_DIVERGENCE
