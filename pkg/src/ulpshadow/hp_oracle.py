"""Software extended-precision arithmetic (double-double, ~106-bit
significand) used as the high-precision reference backend.

A DoubleDouble is the unevaluated sum of two binary64 values hi + lo with
|lo| <= ulp(hi)/2; it represents the exact real hi + lo.  The basic
arithmetic is built on the classic error-free transformations (Knuth
two_sum, Dekker two_prod); elementary functions use argument reduction plus
double-double Taylor series, with Newton refinement for the inverse
functions.  Relative accuracy is ~2**-104 for the rational operations and
is tested to 2**-90 for the elementary functions on documented grids that
avoid each function's ill-conditioned points.

All values are immutable; everything here is safe for concurrent use.
"""

from __future__ import annotations

import math

from .ulp_core import DomainError

__all__ = [
    "two_sum",
    "quick_two_sum",
    "two_prod",
    "DoubleDouble",
    "dd",
    "dd_add",
    "dd_sub",
    "dd_mul",
    "dd_div",
    "dd_sqrt",
    "dd_neg",
    "dd_abs",
    "dd_exp",
    "dd_log",
    "dd_log10",
    "dd_sin",
    "dd_cos",
    "dd_tan",
    "dd_asin",
    "dd_acos",
    "dd_sinh",
    "dd_cosh",
    "dd_pow",
    "LN2_DD",
    "LN10_DD",
    "PI_DD",
    "PI_OVER_2_DD",
    "oracle_error",
]

_SPLITTER = 134217729.0  # 2**27 + 1, Dekker split constant


def two_sum(a: float, b: float) -> tuple[float, float]:
    """Error-free sum: returns (s, e) with s = fl(a + b) and a + b = s + e
    exactly (no overflow assumed)."""
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def quick_two_sum(a: float, b: float) -> tuple[float, float]:
    """two_sum specialization requiring |a| >= |b|."""
    s = a + b
    return s, b - (s - a)


def two_prod(a: float, b: float) -> tuple[float, float]:
    """Error-free product via Dekker splitting: p = fl(a * b), a*b = p + e.

    Exact while a*b and the split parts stay in the normal range.
    """
    p = a * b
    ta = _SPLITTER * a
    ahi = ta - (ta - a)
    alo = a - ahi
    tb = _SPLITTER * b
    bhi = tb - (tb - b)
    blo = b - bhi
    e = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, e


def _renorm(hi: float, lo: float) -> tuple[float, float]:
    s, e = two_sum(hi, lo)
    if not math.isfinite(s):
        return s, 0.0
    return s, e


class DoubleDouble:
    """Unevaluated sum hi + lo of two binary64 values, renormalized."""

    __slots__ = ("hi", "lo")

    def __init__(self, hi: float, lo: float = 0.0) -> None:
        hi, lo = _renorm(float(hi), float(lo))
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "lo", lo)

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("DoubleDouble is immutable")

    @staticmethod
    def _raw(hi: float, lo: float) -> "DoubleDouble":
        # Internal constructor for components already in renormalized form.
        self = object.__new__(DoubleDouble)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "lo", lo)
        return self

    def to_float(self) -> float:
        """Round-to-nearest binary64 value (= hi for a renormalized pair)."""
        return self.hi

    def is_finite(self) -> bool:
        return math.isfinite(self.hi)

    def is_nan(self) -> bool:
        return math.isnan(self.hi)

    def __repr__(self) -> str:
        return f"DoubleDouble({self.hi!r}, {self.lo!r})"

    def __float__(self) -> float:
        return self.hi

    def __bool__(self) -> bool:
        return self.hi != 0.0

    def __eq__(self, other: object) -> bool:
        o = _coerce(other)
        if o is None:
            return NotImplemented
        return self.hi == o.hi and self.lo == o.lo

    def __hash__(self) -> int:
        return hash((self.hi, self.lo))

    # Renormalization makes (hi, lo) lexicographic order agree with the
    # exact numeric order; NaN compares false like IEEE.
    def __lt__(self, other: object) -> bool:
        o = _coerce(other)
        if o is None:
            return NotImplemented
        if math.isnan(self.hi) or math.isnan(o.hi):
            return False
        return self.hi < o.hi or (self.hi == o.hi and self.lo < o.lo)

    def __le__(self, other: object) -> bool:
        o = _coerce(other)
        if o is None:
            return NotImplemented
        if math.isnan(self.hi) or math.isnan(o.hi):
            return False
        return self.hi < o.hi or (self.hi == o.hi and self.lo <= o.lo)

    def __gt__(self, other: object) -> bool:
        o = _coerce(other)
        if o is None:
            return NotImplemented
        if math.isnan(self.hi) or math.isnan(o.hi):
            return False
        return o.__lt__(self)

    def __ge__(self, other: object) -> bool:
        o = _coerce(other)
        if o is None:
            return NotImplemented
        if math.isnan(self.hi) or math.isnan(o.hi):
            return False
        return o.__le__(self)

    def __neg__(self) -> "DoubleDouble":
        return DoubleDouble._raw(-self.hi, -self.lo)

    def __abs__(self) -> "DoubleDouble":
        return -self if self.hi < 0.0 else self

    def __add__(self, other: object) -> "DoubleDouble":
        o = _coerce(other)
        return NotImplemented if o is None else dd_add(self, o)

    __radd__ = __add__

    def __sub__(self, other: object) -> "DoubleDouble":
        o = _coerce(other)
        return NotImplemented if o is None else dd_sub(self, o)

    def __rsub__(self, other: object) -> "DoubleDouble":
        o = _coerce(other)
        return NotImplemented if o is None else dd_sub(o, self)

    def __mul__(self, other: object) -> "DoubleDouble":
        o = _coerce(other)
        return NotImplemented if o is None else dd_mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, other: object) -> "DoubleDouble":
        o = _coerce(other)
        return NotImplemented if o is None else dd_div(self, o)

    def __rtruediv__(self, other: object) -> "DoubleDouble":
        o = _coerce(other)
        return NotImplemented if o is None else dd_div(o, self)


def _coerce(x: object) -> DoubleDouble | None:
    if isinstance(x, DoubleDouble):
        return x
    if isinstance(x, (int, float)):
        return DoubleDouble(float(x))
    return None


def dd(x: float, lo: float = 0.0) -> DoubleDouble:
    """Shorthand constructor."""
    return DoubleDouble(x, lo)


_ZERO = DoubleDouble._raw(0.0, 0.0)
_ONE = DoubleDouble._raw(1.0, 0.0)


def _nonfinite(a: DoubleDouble, b: DoubleDouble) -> bool:
    return not (math.isfinite(a.hi) and math.isfinite(b.hi))


def dd_add(a: DoubleDouble, b: DoubleDouble) -> DoubleDouble:
    if _nonfinite(a, b):
        return DoubleDouble(a.hi + b.hi)
    s1, s2 = two_sum(a.hi, b.hi)
    t1, t2 = two_sum(a.lo, b.lo)
    s2 += t1
    s1, s2 = quick_two_sum(s1, s2)
    s2 += t2
    s1, s2 = quick_two_sum(s1, s2)
    return DoubleDouble._raw(*_renorm(s1, s2))


def dd_neg(a: DoubleDouble) -> DoubleDouble:
    return -a


def dd_abs(a: DoubleDouble) -> DoubleDouble:
    return abs(a)


def dd_sub(a: DoubleDouble, b: DoubleDouble) -> DoubleDouble:
    return dd_add(a, -b)


def dd_mul(a: DoubleDouble, b: DoubleDouble) -> DoubleDouble:
    if _nonfinite(a, b):
        return DoubleDouble(a.hi * b.hi)
    p, e = two_prod(a.hi, b.hi)
    e += a.hi * b.lo + a.lo * b.hi + a.lo * b.lo
    return DoubleDouble._raw(*_renorm(p, e))


def _mul_f(a: DoubleDouble, f: float) -> DoubleDouble:
    p, e = two_prod(a.hi, f)
    e += a.lo * f
    return DoubleDouble._raw(*_renorm(p, e))


def dd_div(a: DoubleDouble, b: DoubleDouble) -> DoubleDouble:
    """Quotient via a binary64 seed plus two residual (Newton) corrections."""
    if b.hi == 0.0 and b.lo == 0.0:
        raise DomainError("double-double division by zero")
    if _nonfinite(a, b):
        return DoubleDouble(a.hi / b.hi)
    q1 = a.hi / b.hi
    if not math.isfinite(q1):
        return DoubleDouble(q1)
    r = dd_sub(a, _mul_f(b, q1))
    q2 = r.hi / b.hi
    r = dd_sub(r, _mul_f(b, q2))
    q3 = r.hi / b.hi
    s1, s2 = quick_two_sum(q1, q2)
    return DoubleDouble._raw(*_renorm(s1, s2 + q3))


def dd_sqrt(a: DoubleDouble) -> DoubleDouble:
    """Square root via a binary64 seed plus one Heron refinement in dd."""
    if a.hi == 0.0 and a.lo == 0.0:
        return _ZERO
    if a.hi < 0.0:
        raise DomainError("double-double sqrt of a negative value")
    if not math.isfinite(a.hi):
        return DoubleDouble(math.sqrt(a.hi) if a.hi > 0 else math.nan)
    x0 = DoubleDouble(math.sqrt(a.hi))
    return _mul_f(dd_add(x0, dd_div(a, x0)), 0.5)


# Reference constants: binary64 leading term plus the exactly rounded tail.
LN2_DD = DoubleDouble._raw(0.6931471805599453, 2.3190468138462996e-17)
PI_DD = DoubleDouble._raw(3.141592653589793, 1.2246467991473532e-16)
PI_OVER_2_DD = DoubleDouble._raw(1.5707963267948966, 6.123233995736766e-17)


def _reciprocal_factorials(n: int) -> list[DoubleDouble]:
    out = [_ONE]
    acc = _ONE
    for i in range(1, n + 1):
        acc = dd_div(acc, DoubleDouble(float(i)))
        out.append(acc)
    return out

_INV_FACT = _reciprocal_factorials(32)

# Taylor degrees, chosen so the truncated tail is far below the dd rounding
# floor on each reduced range (exp: |r| <= ln2/2; sin/cos: |r| <= pi/4;
# sinh: |x| < 1).
_EXP_DEGREE = 26
_SIN_DEGREES = range(31, 2, -2)
_COS_DEGREES = range(30, 1, -2)
_SINH_DEGREES = range(27, 2, -2)

_EXP_OVERFLOW = 709.782712893384
_EXP_UNDERFLOW = -745.2


def dd_exp(x: DoubleDouble) -> DoubleDouble:
    """exp via x = k*ln2 + r, |r| <= ln2/2, and a dd Taylor series in r."""
    if math.isnan(x.hi):
        return DoubleDouble(math.nan)
    if x.hi > _EXP_OVERFLOW:
        return DoubleDouble(math.inf)
    if x.hi < _EXP_UNDERFLOW:
        return _ZERO
    k = round(x.hi / 0.6931471805599453)
    r = dd_sub(x, _mul_f(LN2_DD, float(k)))
    # Horner evaluation of sum r^i / i!, i = 0.._EXP_DEGREE.
    acc = _INV_FACT[_EXP_DEGREE]
    for i in range(_EXP_DEGREE - 1, -1, -1):
        acc = dd_add(dd_mul(acc, r), _INV_FACT[i])
    return DoubleDouble._raw(math.ldexp(acc.hi, k), math.ldexp(acc.lo, k))


def dd_log(x: DoubleDouble) -> DoubleDouble:
    """log via Newton iterations y <- y + x*exp(-y) - 1 on a binary64 seed."""
    if math.isnan(x.hi):
        return DoubleDouble(math.nan)
    if x.hi <= 0.0:
        raise DomainError("double-double log requires a positive argument")
    if not math.isfinite(x.hi):
        return DoubleDouble(math.inf)
    y = DoubleDouble(math.log(x.hi))
    for _ in range(2):
        y = dd_add(y, dd_sub(dd_mul(x, dd_exp(-y)), _ONE))
    return y


# Derived at import, verified against an independent high-precision
# reference in the test suite.
LN10_DD = dd_log(DoubleDouble(10.0))


def dd_log10(x: DoubleDouble) -> DoubleDouble:
    return dd_div(dd_log(x), LN10_DD)


def _sin_taylor(r: DoubleDouble) -> DoubleDouble:
    r2 = dd_mul(r, r)
    acc = _ZERO
    sign = -1 if (31 // 2) % 2 else 1
    for n in _SIN_DEGREES:
        term = _INV_FACT[n] if sign > 0 else -_INV_FACT[n]
        acc = dd_add(acc, term)
        acc = dd_mul(acc, r2)
        sign = -sign
    acc = dd_add(acc, _ONE)
    return dd_mul(acc, r)


def _cos_taylor(r: DoubleDouble) -> DoubleDouble:
    r2 = dd_mul(r, r)
    acc = _ZERO
    sign = -1 if (30 // 2) % 2 else 1
    for n in _COS_DEGREES:
        term = _INV_FACT[n] if sign > 0 else -_INV_FACT[n]
        acc = dd_add(acc, term)
        acc = dd_mul(acc, r2)
        sign = -sign
    return dd_add(acc, _ONE)


def _trig_reduce(x: DoubleDouble) -> tuple[int, DoubleDouble]:
    """x = k*(pi/2) + r with |r| <= pi/4 + eps; returns (k mod 4, r).

    The k*(pi/2) product is formed from exact two_prod pieces, so the
    reduction error is k times the representation error of PI_OVER_2_DD
    (~1e-33); accuracy is documented for |x| up to ~1e5.
    """
    k = round(x.hi / 1.5707963267948966)
    if k == 0:
        return 0, x
    kf = float(k)
    p1, e1 = two_prod(PI_OVER_2_DD.hi, kf)
    p2, e2 = two_prod(PI_OVER_2_DD.lo, kf)
    r = dd_sub(x, DoubleDouble(p1))
    r = dd_sub(r, DoubleDouble(e1))
    r = dd_sub(r, DoubleDouble(p2))
    r = dd_sub(r, DoubleDouble(e2))
    return int(k) % 4, r


def dd_sin(x: DoubleDouble) -> DoubleDouble:
    if not math.isfinite(x.hi):
        return DoubleDouble(math.nan)
    q, r = _trig_reduce(x)
    if q == 0:
        return _sin_taylor(r)
    if q == 1:
        return _cos_taylor(r)
    if q == 2:
        return -_sin_taylor(r)
    return -_cos_taylor(r)


def dd_cos(x: DoubleDouble) -> DoubleDouble:
    if not math.isfinite(x.hi):
        return DoubleDouble(math.nan)
    q, r = _trig_reduce(x)
    if q == 0:
        return _cos_taylor(r)
    if q == 1:
        return -_sin_taylor(r)
    if q == 2:
        return -_cos_taylor(r)
    return _sin_taylor(r)


def dd_tan(x: DoubleDouble) -> DoubleDouble:
    if not math.isfinite(x.hi):
        return DoubleDouble(math.nan)
    q, r = _trig_reduce(x)
    s, c = _sin_taylor(r), _cos_taylor(r)
    if q in (1, 3):
        s, c = c, -s
    return dd_div(s, c)


def dd_asin(x: DoubleDouble) -> DoubleDouble:
    """arcsin via Newton on sin: y <- y + (x - sin y)/cos y."""
    if math.isnan(x.hi):
        return DoubleDouble(math.nan)
    if abs(x) > _ONE:
        raise DomainError("double-double asin requires |x| <= 1")
    if x == _ONE:
        return PI_OVER_2_DD
    if x == -_ONE:
        return -PI_OVER_2_DD
    y = DoubleDouble(math.asin(max(-1.0, min(1.0, x.hi))))
    for _ in range(2):
        y = dd_add(y, dd_div(dd_sub(x, dd_sin(y)), dd_cos(y)))
    return y


def dd_acos(x: DoubleDouble) -> DoubleDouble:
    """arccos via Newton on cos: y <- y + (cos y - x)/sin y."""
    if math.isnan(x.hi):
        return DoubleDouble(math.nan)
    if abs(x) > _ONE:
        raise DomainError("double-double acos requires |x| <= 1")
    if x == _ONE:
        return _ZERO
    if x == -_ONE:
        return PI_DD
    y = DoubleDouble(math.acos(max(-1.0, min(1.0, x.hi))))
    for _ in range(2):
        y = dd_add(y, dd_div(dd_sub(dd_cos(y), x), dd_sin(y)))
    return y


def dd_sinh(x: DoubleDouble) -> DoubleDouble:
    if not math.isfinite(x.hi):
        return DoubleDouble(x.hi)  # sinh(+-inf) = +-inf, NaN stays NaN
    if abs(x.hi) < 1.0:
        # Odd Taylor series; the exp form loses ~2**-25 relative accuracy
        # to cancellation as x -> 0.
        r2 = dd_mul(x, x)
        acc = _ZERO
        for n in _SINH_DEGREES:
            acc = dd_add(acc, _INV_FACT[n])
            acc = dd_mul(acc, r2)
        return dd_mul(dd_add(acc, _ONE), x)
    e = dd_exp(x)
    return _mul_f(dd_sub(e, dd_div(_ONE, e)), 0.5)


def dd_cosh(x: DoubleDouble) -> DoubleDouble:
    if not math.isfinite(x.hi):
        return DoubleDouble(math.nan if math.isnan(x.hi) else math.inf)
    e = dd_exp(x)
    return _mul_f(dd_add(e, dd_div(_ONE, e)), 0.5)


def _integer_exponent(y: DoubleDouble) -> int | None:
    if y.lo != 0.0 or not y.hi.is_integer() or abs(y.hi) > 2**53:
        return None
    return int(y.hi)


def dd_pow(x: DoubleDouble, y: DoubleDouble) -> DoubleDouble:
    """x**y as exp(y * log x); negative bases allowed for exact integer y."""
    if math.isnan(x.hi) or math.isnan(y.hi):
        return DoubleDouble(math.nan)
    if y.hi == 0.0 and y.lo == 0.0:
        return _ONE
    if x.hi == 0.0 and x.lo == 0.0:
        if y.hi > 0.0:
            return _ZERO
        raise DomainError("double-double pow: 0 raised to a non-positive power")
    if x.hi < 0.0:
        n = _integer_exponent(y)
        if n is None:
            raise DomainError("double-double pow: negative base with non-integer exponent")
        magnitude = dd_exp(dd_mul(y, dd_log(abs(x))))
        return -magnitude if n % 2 else magnitude
    return dd_exp(dd_mul(y, dd_log(x)))


def oracle_error(program, inputs) -> float:
    """ULP divergence between the plain run and the binary64 rounding of the
    double-double run of the same program; see expr_ir.oracle_error."""
    from .expr_ir import oracle_error as _impl

    return _impl(program, inputs)
