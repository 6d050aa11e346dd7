# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled banded interpolation kernels.

Inputs are zero-padded so that every stencil index is in range; see
``cimtraj.interp`` for the stencil convention.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def banded_rows(const double[:, ::1] padded, const cnp.int64_t[::1] start,
                const double[:, ::1] w):
    """out[i, c] = sum_a w[i, a] * padded[start[i] + a, c].

    Columns are processed in blocks of eight register accumulators so each
    output element is stored once.
    """
    cdef Py_ssize_t p = w.shape[0], m = w.shape[1], ncol = padded.shape[1]
    cdef Py_ssize_t i, a, c
    cdef double wa, s0, s1, s2, s3, s4, s5, s6, s7
    cdef const double* base
    cdef const double* row
    out_arr = np.empty((p, ncol))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(p):
            base = &padded[start[i], 0]
            c = 0
            while c + 8 <= ncol:
                s0 = s1 = s2 = s3 = s4 = s5 = s6 = s7 = 0.0
                for a in range(m):
                    wa = w[i, a]
                    row = base + a * ncol + c
                    s0 += wa * row[0]
                    s1 += wa * row[1]
                    s2 += wa * row[2]
                    s3 += wa * row[3]
                    s4 += wa * row[4]
                    s5 += wa * row[5]
                    s6 += wa * row[6]
                    s7 += wa * row[7]
                out[i, c] = s0
                out[i, c + 1] = s1
                out[i, c + 2] = s2
                out[i, c + 3] = s3
                out[i, c + 4] = s4
                out[i, c + 5] = s5
                out[i, c + 6] = s6
                out[i, c + 7] = s7
                c += 8
            while c < ncol:
                s0 = 0.0
                for a in range(m):
                    s0 += w[i, a] * base[a * ncol + c]
                out[i, c] = s0
                c += 1
    return out_arr


def banded_congruence(const double[:, ::1] padded, const cnp.int64_t[::1] sr,
                      const double[:, ::1] wr, const cnp.int64_t[::1] sc,
                      const double[:, ::1] wc):
    """out[i, j] = sum_ab wr[i, a] wc[j, b] padded[sr[i] + a, sc[j] + b].

    Both passes run as row combinations over contiguous memory; the
    intermediate is transposed in between.
    """
    tmp = banded_rows(padded, sr, wr)
    out_t = banded_rows(np.ascontiguousarray(tmp.T), sc, wc)
    return np.ascontiguousarray(out_t.T)
