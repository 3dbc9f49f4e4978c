# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: polygon containment and binary phi correlation."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, NAN

cnp.import_array()


cdef bint _edge_scan(double x, double y, const double[:] vx, const double[:] vy,
                     const long long[:] starts) noexcept nogil:
    cdef bint inside = False
    cdef Py_ssize_t r, i
    cdef double ax, ay, bx, by, cross
    for r in range(starts.shape[0] - 1):
        for i in range(starts[r], starts[r + 1] - 1):
            ax = vx[i]
            ay = vy[i]
            bx = vx[i + 1]
            by = vy[i + 1]
            cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
            if (cross == 0.0 and min(ax, bx) <= x <= max(ax, bx)
                    and min(ay, by) <= y <= max(ay, by)):
                return True
            if ay <= y < by:
                if cross > 0.0:
                    inside = not inside
            elif by <= y < ay:
                if cross < 0.0:
                    inside = not inside
    return inside


def point_in_rings(double x, double y, vx, vy, starts):
    cdef const double[:] cvx = np.ascontiguousarray(vx, dtype=np.float64)
    cdef const double[:] cvy = np.ascontiguousarray(vy, dtype=np.float64)
    cdef const long long[:] cst = np.ascontiguousarray(starts, dtype=np.int64)
    return bool(_edge_scan(x, y, cvx, cvy, cst))


def points_in_rings(xs, ys, vx, vy, starts):
    cdef const double[:] cxs = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[:] cys = np.ascontiguousarray(ys, dtype=np.float64)
    cdef const double[:] cvx = np.ascontiguousarray(vx, dtype=np.float64)
    cdef const double[:] cvy = np.ascontiguousarray(vy, dtype=np.float64)
    cdef const long long[:] cst = np.ascontiguousarray(starts, dtype=np.int64)
    out = np.zeros(cxs.shape[0], dtype=np.uint8)
    cdef unsigned char[:] o = out
    cdef Py_ssize_t k
    with nogil:
        for k in range(cxs.shape[0]):
            o[k] = _edge_scan(cxs[k], cys[k], cvx, cvy, cst)
    return out


def phi_against(matrix, Py_ssize_t target):
    cdef const unsigned char[:, :] m = np.ascontiguousarray(matrix, dtype=np.uint8)
    cdef Py_ssize_t n_docs = m.shape[0]
    cdef Py_ssize_t n_words = m.shape[1]
    cdef long long[:] col = np.zeros(n_words, dtype=np.int64)
    cdef long long[:] both = np.zeros(n_words, dtype=np.int64)
    out = np.empty(n_words, dtype=np.float64)
    cdef double[:] o = out
    cdef Py_ssize_t d, j
    cdef long long nt, nj
    cdef double den
    with nogil:
        for d in range(n_docs):
            for j in range(n_words):
                if m[d, j]:
                    col[j] += 1
                    if m[d, target]:
                        both[j] += 1
        nt = col[target]
        for j in range(n_words):
            nj = col[j]
            den = <double>(nt * (n_docs - nt)) * <double>(nj * (n_docs - nj))
            if den == 0.0:
                o[j] = NAN
            else:
                o[j] = (n_docs * both[j] - nt * nj) / sqrt(den)
    return out
