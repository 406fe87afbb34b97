"""Pure-Python/NumPy LU kernels: the fallback implementation of the hot
elimination loops, bit-identical to the compiled extension.

Every backend uses the same algorithm skeleton so results are comparable
site-for-site:

* factorization, column k: pivot scan (first maximal |entry|), row swap,
  one division per subdiagonal row, then one multiply and one subtract per
  updated entry (row-major);
* substitution, row i: one multiply and one subtract per prior term, in
  ascending j, then one division (back substitution only).

The fixed-offset paths are vectorized: the offset does not depend on the
site index, every element undergoes the same two individually rounded
operations as the scalar loop, and NumPy does not fuse them, so the values
are bit-identical to the compiled scalar code.  The cyclic path is
order-dependent by definition and stays scalar.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from . import SingularMatrixError

IMPL = "python"

_INT64_MIN = -(2**63)
_MAX_FINITE_ORD = (0x7FF << 52) - 1


def _offset_array(values: np.ndarray, steps: int) -> np.ndarray:
    """Elementwise ULP offset with zero/non-finite pass-through and
    saturation (an offset leaving the finite range keeps the input)."""
    out = np.array(values, dtype=np.float64, copy=True)
    if steps == 0:
        return out
    mask = np.isfinite(out) & (out != 0.0)
    if not mask.any():
        return out
    bits = out.view(np.int64)
    i = bits[mask]
    o = np.where(i >= 0, i, np.int64(_INT64_MIN) - i)
    shifted = o + np.int64(steps)
    shifted = np.where(np.abs(shifted) > np.int64(_MAX_FINITE_ORD), o, shifted)
    bits[mask] = np.where(shifted >= 0, shifted, np.int64(_INT64_MIN) - shifted)
    return out


def _offset_scalar(x: float, steps: int) -> float:
    x = float(x)
    if steps == 0 or x == 0.0 or not math.isfinite(x):
        return x
    (i,) = struct.unpack("<q", struct.pack("<d", x))
    o = i if i >= 0 else _INT64_MIN - i
    shifted = o + steps
    if abs(shifted) > _MAX_FINITE_ORD:
        return x
    back = shifted if shifted >= 0 else _INT64_MIN - shifted
    (v,) = struct.unpack("<d", struct.pack("<q", back))
    return v


def _pivot_row(column: np.ndarray, k: int) -> int:
    """First row index of the maximal |entry| at or below k.

    Mirrors the compiled scan exactly: the scan starts at row k and only a
    strictly greater magnitude replaces the candidate, so NaN entries never
    win unless the scan starts on one.
    """
    if math.isnan(column[k]):
        return k
    sub = np.abs(column[k:])
    return int(np.argmax(np.where(np.isnan(sub), -1.0, sub))) + k


# --- plain ---------------------------------------------------------------

def lu_factor_plain(a: np.ndarray) -> np.ndarray:
    """In-place right-looking LU with partial pivoting; returns the row
    permutation (row i of the factored matrix is row perm[i] of the input).
    """
    n = a.shape[0]
    perm = np.arange(n, dtype=np.int64)
    for k in range(n):
        p = _pivot_row(a[:, k], k)
        if a[p, k] == 0.0:
            raise SingularMatrixError(f"exact zero pivot in column {k}")
        if p != k:
            a[[k, p]] = a[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        m = a[k + 1 :, k] / a[k, k]
        a[k + 1 :, k] = m
        a[k + 1 :, k + 1 :] -= m[:, None] * a[k, k + 1 :]
    return perm


def lu_solve_plain(lu: np.ndarray, perm: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = lu.shape[0]
    y = b[perm].astype(np.float64, copy=True)
    for i in range(1, n):
        t = lu[i, :i] * y[:i]
        acc = y[i]
        for j in range(i):
            acc = acc - t[j]
        y[i] = acc
    x = y
    for i in range(n - 1, -1, -1):
        t = lu[i, i + 1 :] * x[i + 1 :]
        acc = x[i]
        for j in range(t.shape[0]):
            acc = acc - t[j]
        x[i] = acc / lu[i, i]
    return x


# --- fixed ULP offset ------------------------------------------------------

def lu_factor_fixed(a: np.ndarray, steps: int) -> np.ndarray:
    n = a.shape[0]
    perm = np.arange(n, dtype=np.int64)
    for k in range(n):
        p = _pivot_row(a[:, k], k)
        if a[p, k] == 0.0:
            raise SingularMatrixError(f"exact zero pivot in column {k}")
        if p != k:
            a[[k, p]] = a[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        m = _offset_array(a[k + 1 :, k] / a[k, k], steps)
        a[k + 1 :, k] = m
        t = _offset_array(m[:, None] * a[k, k + 1 :], steps)
        a[k + 1 :, k + 1 :] = _offset_array(a[k + 1 :, k + 1 :] - t, steps)
    return perm


def lu_solve_fixed(
    lu: np.ndarray, perm: np.ndarray, b: np.ndarray, steps: int
) -> np.ndarray:
    n = lu.shape[0]
    y = b[perm].astype(np.float64, copy=True)
    for i in range(1, n):
        t = _offset_array(lu[i, :i] * y[:i], steps)
        acc = y[i]
        for j in range(i):
            acc = _offset_scalar(acc - t[j], steps)
        y[i] = acc
    x = y
    for i in range(n - 1, -1, -1):
        t = _offset_array(lu[i, i + 1 :] * x[i + 1 :], steps)
        acc = x[i]
        for j in range(t.shape[0]):
            acc = _offset_scalar(acc - t[j], steps)
        x[i] = _offset_scalar(acc / lu[i, i], steps)
    return x


# --- cyclic ULP offsets -----------------------------------------------------

def lu_factor_cyclic(
    a: np.ndarray, sequence: np.ndarray, site: int
) -> tuple[np.ndarray, int]:
    n = a.shape[0]
    seq = [int(v) for v in sequence]
    period = len(seq)
    perm = np.arange(n, dtype=np.int64)
    for k in range(n):
        p = _pivot_row(a[:, k], k)
        if a[p, k] == 0.0:
            raise SingularMatrixError(f"exact zero pivot in column {k}")
        if p != k:
            a[[k, p]] = a[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        pivot = a[k, k]
        for j in range(k + 1, n):
            a[j, k] = _offset_scalar(a[j, k] / pivot, seq[site % period])
            site += 1
        for j in range(k + 1, n):
            m = a[j, k]
            for l in range(k + 1, n):
                t = _offset_scalar(m * a[k, l], seq[site % period])
                site += 1
                a[j, l] = _offset_scalar(a[j, l] - t, seq[site % period])
                site += 1
    return perm, site


def lu_solve_cyclic(
    lu: np.ndarray,
    perm: np.ndarray,
    b: np.ndarray,
    sequence: np.ndarray,
    site: int,
) -> tuple[np.ndarray, int]:
    n = lu.shape[0]
    seq = [int(v) for v in sequence]
    period = len(seq)
    y = b[perm].astype(np.float64, copy=True)
    for i in range(1, n):
        acc = y[i]
        for j in range(i):
            t = _offset_scalar(lu[i, j] * y[j], seq[site % period])
            site += 1
            acc = _offset_scalar(acc - t, seq[site % period])
            site += 1
        y[i] = acc
    x = y
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for j in range(i + 1, n):
            t = _offset_scalar(lu[i, j] * x[j], seq[site % period])
            site += 1
            acc = _offset_scalar(acc - t, seq[site % period])
            site += 1
        x[i] = _offset_scalar(acc / lu[i, i], seq[site % period])
        site += 1
    return x, site


# --- double-double ----------------------------------------------------------
#
# Elementwise error-free transformations on hi/lo arrays, using the exact
# operation sequences of the scalar oracle layer (Dekker splitting, no FMA)
# so all implementations agree bitwise.

_SPLITTER = 134217729.0  # 2**27 + 1


def _vtwo_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _vquick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def _vtwo_prod(a, b):
    p = a * b
    ta = _SPLITTER * a
    ahi = ta - (ta - a)
    alo = a - ahi
    tb = _SPLITTER * b
    bhi = tb - (tb - b)
    blo = b - bhi
    return p, ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo


def _vdd_add(ahi, alo, bhi, blo):
    s1, s2 = _vtwo_sum(ahi, bhi)
    t1, t2 = _vtwo_sum(alo, blo)
    s2 = s2 + t1
    s1, s2 = _vquick_two_sum(s1, s2)
    s2 = s2 + t2
    s1, s2 = _vquick_two_sum(s1, s2)
    return _vtwo_sum(s1, s2)


def _vdd_sub(ahi, alo, bhi, blo):
    return _vdd_add(ahi, alo, -bhi, -blo)


def _vdd_mul(ahi, alo, bhi, blo):
    p, e = _vtwo_prod(ahi, bhi)
    e = e + (ahi * blo + alo * bhi + alo * blo)
    return _vtwo_sum(p, e)


def _vdd_div(ahi, alo, bhi, blo):
    q1 = ahi / bhi
    ph, pl = _vdd_mul(bhi, blo, q1, 0.0)
    rh, rl = _vdd_sub(ahi, alo, ph, pl)
    q2 = rh / bhi
    ph, pl = _vdd_mul(bhi, blo, q2, 0.0)
    rh, rl = _vdd_sub(rh, rl, ph, pl)
    q3 = rh / bhi
    s1, s2 = _vquick_two_sum(q1, q2)
    return _vtwo_sum(s1, s2 + q3)


def _dd_abs_greater(xh, xl, yh, yl) -> bool:
    """|x| > |y| for renormalized scalar pairs."""
    axh, axl = (xh, xl) if xh >= 0.0 else (-xh, -xl)
    ayh, ayl = (yh, yl) if yh >= 0.0 else (-yh, -yl)
    return axh > ayh or (axh == ayh and axl > ayl)


def lu_factor_dd(ahi: np.ndarray, alo: np.ndarray) -> np.ndarray:
    n = ahi.shape[0]
    perm = np.arange(n, dtype=np.int64)
    for k in range(n):
        p = k
        for j in range(k + 1, n):
            if _dd_abs_greater(ahi[j, k], alo[j, k], ahi[p, k], alo[p, k]):
                p = j
        if ahi[p, k] == 0.0 and alo[p, k] == 0.0:
            raise SingularMatrixError(f"exact zero pivot in column {k}")
        if p != k:
            ahi[[k, p]] = ahi[[p, k]]
            alo[[k, p]] = alo[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        mh, ml = _vdd_div(
            ahi[k + 1 :, k], alo[k + 1 :, k], ahi[k, k], alo[k, k]
        )
        ahi[k + 1 :, k] = mh
        alo[k + 1 :, k] = ml
        th, tl = _vdd_mul(
            mh[:, None], ml[:, None], ahi[k, k + 1 :], alo[k, k + 1 :]
        )
        ahi[k + 1 :, k + 1 :], alo[k + 1 :, k + 1 :] = _vdd_sub(
            ahi[k + 1 :, k + 1 :], alo[k + 1 :, k + 1 :], th, tl
        )
    return perm


def lu_solve_dd(
    luhi: np.ndarray, lulo: np.ndarray, perm: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    n = luhi.shape[0]
    yh = b[perm].astype(np.float64, copy=True)
    yl = np.zeros(n)
    for i in range(1, n):
        acch, accl = yh[i], yl[i]
        for j in range(i):
            th, tl = _vdd_mul(luhi[i, j], lulo[i, j], yh[j], yl[j])
            acch, accl = _vdd_sub(acch, accl, th, tl)
        yh[i], yl[i] = acch, accl
    xh, xl = yh, yl
    for i in range(n - 1, -1, -1):
        acch, accl = xh[i], xl[i]
        for j in range(i + 1, n):
            th, tl = _vdd_mul(luhi[i, j], lulo[i, j], xh[j], xl[j])
            acch, accl = _vdd_sub(acch, accl, th, tl)
        xh[i], xl[i] = _vdd_div(acch, accl, luhi[i, i], lulo[i, i])
    return xh, xl
