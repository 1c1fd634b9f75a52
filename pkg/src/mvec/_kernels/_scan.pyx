# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled prefix distance scan.

One fused pass per row: dot the first m coordinates against the unit
query and accumulate the prefix squared norm, both in float64, then emit
2 - 2 * dot / sqrt(sq_norm).  Rows whose prefix is numerically zero score
as orthogonal (distance exactly 2), matching the numpy fallback.

Like the fallback, the reduction is content-pure: a row's distance is a
function of its values and m alone, so bit-identical rows tie exactly
and the id tiebreak stays deterministic across backends.
"""

from libc.math cimport sqrt

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double ZERO_SQ_NORM = 1e-24


cdef inline double _row_sq(const float* row, Py_ssize_t m) noexcept nogil:
    # Must mirror the squared-norm lanes of _row_distance exactly: the
    # precomputed-norms path feeds these values back into it, and cached
    # vs on-the-fly scans must agree bit-for-bit.
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t j = 0
    cdef Py_ssize_t bound = m - (m & 3)
    while j < bound:
        s0 += (<double> row[j]) * (<double> row[j])
        s1 += (<double> row[j + 1]) * (<double> row[j + 1])
        s2 += (<double> row[j + 2]) * (<double> row[j + 2])
        s3 += (<double> row[j + 3]) * (<double> row[j + 3])
        j += 4
    while j < m:
        s0 += (<double> row[j]) * (<double> row[j])
        j += 1
    return (s0 + s1) + (s2 + s3)


cdef inline double _row_distance(const float* row, const double* q, Py_ssize_t m,
                                 double sq_norm, bint have_norm) noexcept nogil:
    # Four independent accumulator chains hide the float-add latency that
    # would serialize a single running sum.  The lane combine order is
    # fixed, so the result depends only on the row content and m — never
    # on where the row sits in the table — keeping duplicate rows exact
    # distance ties.
    cdef double d0 = 0.0, d1 = 0.0, d2 = 0.0, d3 = 0.0
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef double sq = sq_norm
    cdef Py_ssize_t j = 0
    cdef Py_ssize_t bound = m - (m & 3)
    if have_norm:
        while j < bound:
            d0 += row[j] * q[j]
            d1 += row[j + 1] * q[j + 1]
            d2 += row[j + 2] * q[j + 2]
            d3 += row[j + 3] * q[j + 3]
            j += 4
        while j < m:
            d0 += row[j] * q[j]
            j += 1
    else:
        while j < bound:
            d0 += row[j] * q[j]
            s0 += (<double> row[j]) * (<double> row[j])
            d1 += row[j + 1] * q[j + 1]
            s1 += (<double> row[j + 1]) * (<double> row[j + 1])
            d2 += row[j + 2] * q[j + 2]
            s2 += (<double> row[j + 2]) * (<double> row[j + 2])
            d3 += row[j + 3] * q[j + 3]
            s3 += (<double> row[j + 3]) * (<double> row[j + 3])
            j += 4
        while j < m:
            d0 += row[j] * q[j]
            s0 += (<double> row[j]) * (<double> row[j])
            j += 1
        sq = (s0 + s1) + (s2 + s3)
    cdef double dot = (d0 + d1) + (d2 + d3)
    if sq <= ZERO_SQ_NORM:
        return 2.0
    return 2.0 - 2.0 * dot / sqrt(sq)


def prefix_sq_l2(const float[:, ::1] table, const double[::1] query, double[::1] out,
                 prefix_sq_norms=None):
    """Distances from the unit query to every row prefix of the table.

    ``query`` carries the prefix length: only its first len(query)
    coordinates of each row are read.
    """
    cdef Py_ssize_t m = query.shape[0]
    cdef Py_ssize_t n = table.shape[0]
    if m > table.shape[1]:
        raise ValueError("query prefix longer than table rows")
    if out.shape[0] != n:
        raise ValueError("output buffer size mismatch")
    cdef const double[::1] norms
    cdef bint have_norm = prefix_sq_norms is not None
    cdef Py_ssize_t i
    if have_norm:
        norms = prefix_sq_norms
        if norms.shape[0] != n:
            raise ValueError("prefix norm buffer size mismatch")
        with nogil:
            for i in range(n):
                out[i] = _row_distance(&table[i, 0], &query[0], m, norms[i], True)
    else:
        with nogil:
            for i in range(n):
                out[i] = _row_distance(&table[i, 0], &query[0], m, 0.0, False)


def prefix_sq(const float[:, ::1] table, Py_ssize_t m, double[::1] out):
    """Squared norm of every row's m-prefix, lane-identical to the scan."""
    cdef Py_ssize_t n = table.shape[0]
    if m > table.shape[1]:
        raise ValueError("prefix longer than table rows")
    if out.shape[0] != n:
        raise ValueError("output buffer size mismatch")
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = _row_sq(&table[i, 0], m)


def prefix_sq_l2_subset(const float[:, ::1] table, const double[::1] query,
                        const long long[::1] row_idx, double[::1] out,
                        prefix_sq_norms=None):
    """Same scan restricted to the rows listed in ``row_idx``."""
    cdef Py_ssize_t m = query.shape[0]
    cdef Py_ssize_t n = row_idx.shape[0]
    if m > table.shape[1]:
        raise ValueError("query prefix longer than table rows")
    if out.shape[0] != n:
        raise ValueError("output buffer size mismatch")
    cdef const double[::1] norms
    cdef bint have_norm = prefix_sq_norms is not None
    cdef Py_ssize_t i, r
    if have_norm:
        norms = prefix_sq_norms
        with nogil:
            for i in range(n):
                r = <Py_ssize_t> row_idx[i]
                out[i] = _row_distance(&table[r, 0], &query[0], m, norms[r], True)
    else:
        with nogil:
            for i in range(n):
                r = <Py_ssize_t> row_idx[i]
                out[i] = _row_distance(&table[r, 0], &query[0], m, 0.0, False)
