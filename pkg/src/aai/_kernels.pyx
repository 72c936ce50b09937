# cython: boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled kernels: pattern counting, masked softmax, per-head medians.

Same call signatures as ``aai._kernels_py``. Pattern counts are fused with
binarization so no boolean map is materialized for large traces.
"""

import numpy as np
cimport numpy as cnp
from cython.operator cimport dereference as deref
from libc.math cimport exp, INFINITY
from libcpp.algorithm cimport max_element, nth_element
from libcpp.vector cimport vector

from .errors import DegenerateInputError, DegenerateRowError

cnp.import_array()

NAME = "compiled"


def pattern_counts(H):
    cdef const cnp.uint8_t[:, ::1] h = np.ascontiguousarray(H, dtype=np.uint8)
    cdef Py_ssize_t n = h.shape[0], m = h.shape[1], i, j
    cdef long long active = 0, diagonal = 0, column = 0, row = 0
    cdef bint cell
    with nogil:
        for i in range(n):
            for j in range(m):
                cell = h[i, j] != 0
                if not cell:
                    continue
                active += 1
                if i + 1 < n:
                    if h[i + 1, j]:
                        column += 1
                    if j + 1 < m and h[i + 1, j + 1]:
                        diagonal += 1
                if j + 1 < m and h[i, j + 1]:
                    row += 1
    return int(active), int(diagonal), int(column), int(row)


cdef inline bint _on(const double[:, ::1] a, Py_ssize_t i, Py_ssize_t j,
                     double threshold) noexcept nogil:
    return i >= j and a[i, j] > threshold


def weight_pattern_counts(A, double threshold):
    cdef const double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], i, j, jmax
    cdef long long active = 0, diagonal = 0, column = 0, row = 0
    with nogil:
        for i in range(n):
            jmax = i + 1 if i + 1 < m else m
            for j in range(jmax):
                if not a[i, j] > threshold:
                    continue
                active += 1
                if i + 1 < n:
                    if _on(a, i + 1, j, threshold):
                        column += 1
                    if j + 1 < m and _on(a, i + 1, j + 1, threshold):
                        diagonal += 1
                if j + 1 < m and _on(a, i, j + 1, threshold):
                    row += 1
    return int(active), int(diagonal), int(column), int(row)


def masked_softmax(S, M=None):
    cdef const double[:, ::1] s = np.ascontiguousarray(S, dtype=np.float64)
    cdef const double[:, ::1] msk
    cdef bint has_mask = M is not None
    if has_mask:
        msk = np.ascontiguousarray(M, dtype=np.float64)
        if msk.shape[0] != s.shape[0] or msk.shape[1] != s.shape[1]:
            raise ValueError("mask shape does not match scores")
    cdef Py_ssize_t n = s.shape[0], m = s.shape[1], i, j
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double z, peak, total
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(n):
            peak = -INFINITY
            for j in range(m):
                z = s[i, j] + msk[i, j] if has_mask else s[i, j]
                o[i, j] = z
                if z > peak:
                    peak = z
            if peak == -INFINITY:
                bad = i
                break
            total = 0.0
            for j in range(m):
                z = o[i, j]
                if z == -INFINITY:
                    o[i, j] = 0.0
                else:
                    o[i, j] = exp(z - peak)
                    total += o[i, j]
            for j in range(m):
                o[i, j] = o[i, j] / total
    if bad >= 0:
        raise DegenerateRowError(f"row {bad} is fully masked")
    return out


cdef double _median(vector[double]& v) noexcept nogil:
    cdef size_t n = v.size(), half = n // 2
    cdef double hi, lo
    nth_element(v.begin(), v.begin() + half, v.end())
    hi = v[half]
    if n % 2:
        return hi
    # lower middle is the max of the left partition
    lo = deref(max_element(v.begin(), v.begin() + half))
    return (lo + hi) / 2


def causal_median(S):
    cdef const double[:, ::1] s = np.ascontiguousarray(S, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0], m = s.shape[1], i, j, jmax
    cdef vector[double] v
    if n == 0 or m == 0:
        raise DegenerateInputError("median over an empty score matrix")
    v.reserve(n * (n + 1) // 2 if n <= m else n * m)
    with nogil:
        for i in range(n):
            jmax = i + 1 if i + 1 < m else m
            for j in range(jmax):
                v.push_back(s[i, j])
    return _median(v)


def full_median(S):
    cdef const double[:, ::1] s = np.ascontiguousarray(S, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0], m = s.shape[1], i, j
    cdef vector[double] v
    if n == 0 or m == 0:
        raise DegenerateInputError("median over an empty score matrix")
    v.assign(&s[0, 0], &s[0, 0] + n * m)
    return _median(v)
