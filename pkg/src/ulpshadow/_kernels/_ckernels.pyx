# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled LU elimination kernels.

Operation-for-operation mirror of _pykernels (same pivot scan, same update
order, same Dekker-split double-double formulas); compiled with
-ffp-contract=off so every multiply and add rounds separately and results
stay bit-identical to the pure-Python fallback.
"""

from libc.math cimport fabs, isfinite, isnan
from libc.string cimport memcpy
from libc.stdint cimport int64_t

import numpy as np

from . import SingularMatrixError

IMPL = "compiled"

cdef int64_t INT64_MIN_ = (<int64_t> -0x7FFFFFFFFFFFFFFF) - 1
cdef int64_t MAX_FINITE_ORD = (<int64_t> 0x7FF << 52) - 1
cdef double SPLITTER = 134217729.0  # 2**27 + 1


cdef inline double _offset1(double x, long steps) noexcept nogil:
    """ULP offset with zero/non-finite pass-through and saturation."""
    cdef int64_t i, o, shifted, back
    cdef double v
    if steps == 0 or x == 0.0 or not isfinite(x):
        return x
    memcpy(&i, &x, 8)
    o = i if i >= 0 else INT64_MIN_ - i
    shifted = o + steps
    if shifted > MAX_FINITE_ORD or shifted < -MAX_FINITE_ORD:
        return x
    back = shifted if shifted >= 0 else INT64_MIN_ - shifted
    memcpy(&v, &back, 8)
    return v


cdef inline Py_ssize_t _pivot_row(double[:, ::1] a, Py_ssize_t k, Py_ssize_t n) noexcept nogil:
    """First row with strictly maximal |entry|; NaN never replaces a
    candidate (IEEE comparisons are false), matching the fallback."""
    cdef Py_ssize_t p = k, j
    cdef double best, v
    if isnan(a[k, k]):
        return k
    best = fabs(a[k, k])
    for j in range(k + 1, n):
        v = fabs(a[j, k])
        if v > best:
            best = v
            p = j
    return p


cdef inline void _swap_rows(double[:, ::1] a, int64_t[::1] perm,
                            Py_ssize_t k, Py_ssize_t p, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t l
    cdef double tmp
    cdef int64_t t
    if p != k:
        for l in range(n):
            tmp = a[k, l]; a[k, l] = a[p, l]; a[p, l] = tmp
        t = perm[k]; perm[k] = perm[p]; perm[p] = t


def lu_factor_plain(a_arr):
    cdef double[:, ::1] a = a_arr
    cdef Py_ssize_t n = a.shape[0], k, j, l, p
    perm_arr = np.arange(n, dtype=np.int64)
    cdef int64_t[::1] perm = perm_arr
    cdef double m
    with nogil:
        for k in range(n):
            p = _pivot_row(a, k, n)
            if a[p, k] == 0.0:
                with gil:
                    raise SingularMatrixError(f"exact zero pivot in column {k}")
            _swap_rows(a, perm, k, p, n)
            for j in range(k + 1, n):
                m = a[j, k] / a[k, k]
                a[j, k] = m
                for l in range(k + 1, n):
                    a[j, l] = a[j, l] - m * a[k, l]
    return perm_arr


def lu_solve_plain(lu_arr, perm_arr, b_arr):
    cdef double[:, ::1] lu = lu_arr
    cdef int64_t[::1] perm = perm_arr
    cdef double[::1] b = np.ascontiguousarray(b_arr, dtype=np.float64)
    cdef Py_ssize_t n = lu.shape[0], i, j
    x_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double acc
    with nogil:
        for i in range(n):
            x[i] = b[perm[i]]
        for i in range(1, n):
            acc = x[i]
            for j in range(i):
                acc = acc - lu[i, j] * x[j]
            x[i] = acc
        for i in range(n - 1, -1, -1):
            acc = x[i]
            for j in range(i + 1, n):
                acc = acc - lu[i, j] * x[j]
            x[i] = acc / lu[i, i]
    return x_arr


def lu_factor_fixed(a_arr, steps):
    cdef double[:, ::1] a = a_arr
    cdef long st = steps
    cdef Py_ssize_t n = a.shape[0], k, j, l, p
    perm_arr = np.arange(n, dtype=np.int64)
    cdef int64_t[::1] perm = perm_arr
    cdef double m, t
    with nogil:
        for k in range(n):
            p = _pivot_row(a, k, n)
            if a[p, k] == 0.0:
                with gil:
                    raise SingularMatrixError(f"exact zero pivot in column {k}")
            _swap_rows(a, perm, k, p, n)
            for j in range(k + 1, n):
                a[j, k] = _offset1(a[j, k] / a[k, k], st)
            for j in range(k + 1, n):
                m = a[j, k]
                for l in range(k + 1, n):
                    t = _offset1(m * a[k, l], st)
                    a[j, l] = _offset1(a[j, l] - t, st)
    return perm_arr


def lu_solve_fixed(lu_arr, perm_arr, b_arr, steps):
    cdef double[:, ::1] lu = lu_arr
    cdef int64_t[::1] perm = perm_arr
    cdef double[::1] b = np.ascontiguousarray(b_arr, dtype=np.float64)
    cdef long st = steps
    cdef Py_ssize_t n = lu.shape[0], i, j
    x_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double acc, t
    with nogil:
        for i in range(n):
            x[i] = b[perm[i]]
        for i in range(1, n):
            acc = x[i]
            for j in range(i):
                t = _offset1(lu[i, j] * x[j], st)
                acc = _offset1(acc - t, st)
            x[i] = acc
        for i in range(n - 1, -1, -1):
            acc = x[i]
            for j in range(i + 1, n):
                t = _offset1(lu[i, j] * x[j], st)
                acc = _offset1(acc - t, st)
            x[i] = _offset1(acc / lu[i, i], st)
    return x_arr


def lu_factor_cyclic(a_arr, sequence, site):
    cdef double[:, ::1] a = a_arr
    cdef long[::1] seq = np.ascontiguousarray(sequence, dtype=np.int_)
    cdef Py_ssize_t period = seq.shape[0]
    cdef long s = site
    cdef Py_ssize_t n = a.shape[0], k, j, l, p
    perm_arr = np.arange(n, dtype=np.int64)
    cdef int64_t[::1] perm = perm_arr
    cdef double m, t
    with nogil:
        for k in range(n):
            p = _pivot_row(a, k, n)
            if a[p, k] == 0.0:
                with gil:
                    raise SingularMatrixError(f"exact zero pivot in column {k}")
            _swap_rows(a, perm, k, p, n)
            for j in range(k + 1, n):
                a[j, k] = _offset1(a[j, k] / a[k, k], seq[s % period]); s += 1
            for j in range(k + 1, n):
                m = a[j, k]
                for l in range(k + 1, n):
                    t = _offset1(m * a[k, l], seq[s % period]); s += 1
                    a[j, l] = _offset1(a[j, l] - t, seq[s % period]); s += 1
    return perm_arr, s


def lu_solve_cyclic(lu_arr, perm_arr, b_arr, sequence, site):
    cdef double[:, ::1] lu = lu_arr
    cdef int64_t[::1] perm = perm_arr
    cdef double[::1] b = np.ascontiguousarray(b_arr, dtype=np.float64)
    cdef long[::1] seq = np.ascontiguousarray(sequence, dtype=np.int_)
    cdef Py_ssize_t period = seq.shape[0]
    cdef long s = site
    cdef Py_ssize_t n = lu.shape[0], i, j
    x_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double acc, t
    with nogil:
        for i in range(n):
            x[i] = b[perm[i]]
        for i in range(1, n):
            acc = x[i]
            for j in range(i):
                t = _offset1(lu[i, j] * x[j], seq[s % period]); s += 1
                acc = _offset1(acc - t, seq[s % period]); s += 1
            x[i] = acc
        for i in range(n - 1, -1, -1):
            acc = x[i]
            for j in range(i + 1, n):
                t = _offset1(lu[i, j] * x[j], seq[s % period]); s += 1
                acc = _offset1(acc - t, seq[s % period]); s += 1
            x[i] = _offset1(acc / lu[i, i], seq[s % period]); s += 1
    return x_arr, s


# --- double-double helpers (Dekker splitting; mirrors _pykernels) --------

cdef struct dd_t:
    double hi
    double lo


cdef inline dd_t _two_sum(double a, double b) noexcept nogil:
    cdef dd_t r
    cdef double s = a + b
    cdef double bb = s - a
    r.hi = s
    r.lo = (a - (s - bb)) + (b - bb)
    return r


cdef inline dd_t _quick_two_sum(double a, double b) noexcept nogil:
    cdef dd_t r
    cdef double s = a + b
    r.hi = s
    r.lo = b - (s - a)
    return r


cdef inline dd_t _two_prod(double a, double b) noexcept nogil:
    cdef dd_t r
    cdef double p = a * b
    cdef double ta = SPLITTER * a
    cdef double ahi = ta - (ta - a)
    cdef double alo = a - ahi
    cdef double tb = SPLITTER * b
    cdef double bhi = tb - (tb - b)
    cdef double blo = b - bhi
    r.hi = p
    r.lo = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return r


cdef inline dd_t _dd_add(double ahi, double alo, double bhi, double blo) noexcept nogil:
    cdef dd_t s = _two_sum(ahi, bhi)
    cdef dd_t t = _two_sum(alo, blo)
    cdef double s2 = s.lo + t.hi
    cdef dd_t q = _quick_two_sum(s.hi, s2)
    s2 = q.lo + t.lo
    q = _quick_two_sum(q.hi, s2)
    return _two_sum(q.hi, q.lo)


cdef inline dd_t _dd_sub(double ahi, double alo, double bhi, double blo) noexcept nogil:
    return _dd_add(ahi, alo, -bhi, -blo)


cdef inline dd_t _dd_mul(double ahi, double alo, double bhi, double blo) noexcept nogil:
    cdef dd_t p = _two_prod(ahi, bhi)
    cdef double e = p.lo + (ahi * blo + alo * bhi + alo * blo)
    return _two_sum(p.hi, e)


cdef inline dd_t _dd_div(double ahi, double alo, double bhi, double blo) noexcept nogil:
    cdef double q1 = ahi / bhi
    cdef dd_t p = _dd_mul(bhi, blo, q1, 0.0)
    cdef dd_t r = _dd_sub(ahi, alo, p.hi, p.lo)
    cdef double q2 = r.hi / bhi
    p = _dd_mul(bhi, blo, q2, 0.0)
    r = _dd_sub(r.hi, r.lo, p.hi, p.lo)
    cdef double q3 = r.hi / bhi
    cdef dd_t s = _quick_two_sum(q1, q2)
    return _two_sum(s.hi, s.lo + q3)


cdef inline bint _dd_abs_greater(double xh, double xl, double yh, double yl) noexcept nogil:
    cdef double axh = xh, axl = xl, ayh = yh, ayl = yl
    if xh < 0.0:
        axh = -xh; axl = -xl
    if yh < 0.0:
        ayh = -yh; ayl = -yl
    return axh > ayh or (axh == ayh and axl > ayl)


def lu_factor_dd(ahi_arr, alo_arr):
    cdef double[:, ::1] ahi = ahi_arr
    cdef double[:, ::1] alo = alo_arr
    cdef Py_ssize_t n = ahi.shape[0], k, j, l, p
    perm_arr = np.arange(n, dtype=np.int64)
    cdef int64_t[::1] perm = perm_arr
    cdef dd_t m, t, u
    cdef double tmp
    cdef int64_t ti
    with nogil:
        for k in range(n):
            p = k
            for j in range(k + 1, n):
                if _dd_abs_greater(ahi[j, k], alo[j, k], ahi[p, k], alo[p, k]):
                    p = j
            if ahi[p, k] == 0.0 and alo[p, k] == 0.0:
                with gil:
                    raise SingularMatrixError(f"exact zero pivot in column {k}")
            if p != k:
                for l in range(n):
                    tmp = ahi[k, l]; ahi[k, l] = ahi[p, l]; ahi[p, l] = tmp
                    tmp = alo[k, l]; alo[k, l] = alo[p, l]; alo[p, l] = tmp
                ti = perm[k]; perm[k] = perm[p]; perm[p] = ti
            for j in range(k + 1, n):
                m = _dd_div(ahi[j, k], alo[j, k], ahi[k, k], alo[k, k])
                ahi[j, k] = m.hi
                alo[j, k] = m.lo
            for j in range(k + 1, n):
                for l in range(k + 1, n):
                    t = _dd_mul(ahi[j, k], alo[j, k], ahi[k, l], alo[k, l])
                    u = _dd_sub(ahi[j, l], alo[j, l], t.hi, t.lo)
                    ahi[j, l] = u.hi
                    alo[j, l] = u.lo
    return perm_arr


def lu_solve_dd(luhi_arr, lulo_arr, perm_arr, b_arr):
    cdef double[:, ::1] luhi = luhi_arr
    cdef double[:, ::1] lulo = lulo_arr
    cdef int64_t[::1] perm = perm_arr
    cdef double[::1] b = np.ascontiguousarray(b_arr, dtype=np.float64)
    cdef Py_ssize_t n = luhi.shape[0], i, j
    xh_arr = np.empty(n, dtype=np.float64)
    xl_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] xh = xh_arr
    cdef double[::1] xl = xl_arr
    cdef dd_t acc, t
    with nogil:
        for i in range(n):
            xh[i] = b[perm[i]]
        for i in range(1, n):
            acc.hi = xh[i]; acc.lo = xl[i]
            for j in range(i):
                t = _dd_mul(luhi[i, j], lulo[i, j], xh[j], xl[j])
                acc = _dd_sub(acc.hi, acc.lo, t.hi, t.lo)
            xh[i] = acc.hi; xl[i] = acc.lo
        for i in range(n - 1, -1, -1):
            acc.hi = xh[i]; acc.lo = xl[i]
            for j in range(i + 1, n):
                t = _dd_mul(luhi[i, j], lulo[i, j], xh[j], xl[j])
                acc = _dd_sub(acc.hi, acc.lo, t.hi, t.lo)
            acc = _dd_div(acc.hi, acc.lo, luhi[i, i], lulo[i, i])
            xh[i] = acc.hi; xl[i] = acc.lo
    return xh_arr, xl_arr
