# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-step logit kernels. Mirrors ``_pure`` one-to-one."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log
from libc.stdlib cimport free, malloc, qsort
from libc.string cimport memcpy

cnp.import_array()

IMPLEMENTATION = "fast"


cdef double _lse(const double* x, Py_ssize_t n) noexcept nogil:
    cdef double m = x[0]
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(1, n):
        if x[i] > m:
            m = x[i]
    for i in range(n):
        s += exp(x[i] - m)
    return m + log(s)


def logsumexp(const double[::1] x):
    return _lse(&x[0], x.shape[0])


def log_softmax(const double[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef double lse = _lse(&x[0], n)
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(n):
        o[i] = x[i] - lse
    return out


def softmax(const double[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef double m = x[0]
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(1, n):
        if x[i] > m:
            m = x[i]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = exp(x[i] - m)
        s += o[i]
    for i in range(n):
        o[i] /= s
    return out


cdef int _cmp_desc(const void* a, const void* b) noexcept nogil:
    cdef double da = (<const double*> a)[0]
    cdef double db = (<const double*> b)[0]
    if da < db:
        return 1
    if da > db:
        return -1
    return 0


cdef double _top_k_sum(const double* x, Py_ssize_t n, Py_ssize_t kk,
                       double* buf) noexcept nogil:
    # single pass keeping the kk largest seen so far; replacements rescan the
    # buffer minimum, so cost is O(n + r * kk) with r the number of running
    # top-k improvements (small once the buffer warms up)
    cdef Py_ssize_t i, j, mi
    cdef double mv, s
    for i in range(kk):
        buf[i] = x[i]
    mi = 0
    for j in range(1, kk):
        if buf[j] < buf[mi]:
            mi = j
    mv = buf[mi]
    for i in range(kk, n):
        if x[i] > mv:
            buf[mi] = x[i]
            mi = 0
            for j in range(1, kk):
                if buf[j] < buf[mi]:
                    mi = j
            mv = buf[mi]
    s = 0.0
    for i in range(kk):
        s += buf[i]
    return s


def token_confidence(const double[::1] x, Py_ssize_t k):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t kk = k if k < n else n
    cdef double lse = _lse(&x[0], n)
    cdef double s = 0.0
    cdef Py_ssize_t i
    cdef double* buf
    if kk <= 64:
        buf = <double*> malloc(kk * sizeof(double))
        if buf == NULL:
            raise MemoryError()
        try:
            s = _top_k_sum(&x[0], n, kk, buf)
        finally:
            free(buf)
        return lse - s / kk
    # selection rescans would go quadratic for large k; sort instead
    buf = <double*> malloc(n * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        memcpy(buf, &x[0], n * sizeof(double))
        qsort(buf, n, sizeof(double), _cmp_desc)
        for i in range(kk):
            s += buf[i]
    finally:
        free(buf)
    return lse - s / kk


def entropy(const double[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef double lse = _lse(&x[0], n)
    cdef double h = 0.0
    cdef double lp
    cdef Py_ssize_t i
    for i in range(n):
        lp = x[i] - lse
        h -= exp(lp) * lp
    return h


def top_margin(const double[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef double first
    cdef double second
    cdef Py_ssize_t i
    if x[0] >= x[1]:
        first, second = x[0], x[1]
    else:
        first, second = x[1], x[0]
    for i in range(2, n):
        if x[i] > first:
            second = first
            first = x[i]
        elif x[i] > second:
            second = x[i]
    return first - second


def fuse(const double[::1] main, const double[::1] contrast, double alpha):
    cdef Py_ssize_t n = main.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(n):
        o[i] = (1.0 + alpha) * main[i] - alpha * contrast[i]
    return out


def clamp(const double[::1] x, double limit):
    cdef Py_ssize_t n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef bint hit = 0
    cdef Py_ssize_t i
    for i in range(n):
        if x[i] > limit:
            o[i] = limit
            hit = 1
        elif x[i] < -limit:
            o[i] = -limit
            hit = 1
        else:
            o[i] = x[i]
    return out, bool(hit)
