# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled spinor operator kernel (see ``_kernels_py`` for the reference)."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def apply_operator(double complex[:, ::1] psi, long long[::1] nodes, double[:, ::1] coef,
                   strides, double inv_h, long long[:, ::1] perm, double complex[:, ::1] phase):
    cdef Py_ssize_t N = nodes.shape[0]
    cdef Py_ssize_t nk = perm.shape[0]
    cdef long long sx = strides[0], sy = strides[1], sz = strides[2]
    cdef long long st[3]
    st[0] = sx; st[1] = sy; st[2] = sz
    cdef double ih2 = inv_h * inv_h
    out_arr = np.zeros((N, 4), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef double complex d1[3][4]
    cdef double complex v[4]
    cdef double complex acc[4]
    cdef double complex c0, lap
    cdef Py_ssize_t q, i, a, k, comp
    cdef long long p, s, t
    cdef int pairs[3][2]
    pairs[0][0] = 0; pairs[0][1] = 1
    pairs[1][0] = 0; pairs[1][1] = 2
    pairs[2][0] = 1; pairs[2][1] = 2
    with nogil:
        for q in range(N):
            p = nodes[q]
            for i in range(4):
                c0 = psi[p, i]
                lap = 0.0
                for a in range(3):
                    s = st[a]
                    d1[a][i] = 0.5 * inv_h * (psi[p + s, i] - psi[p - s, i])
                    lap = lap + coef[q, a] * ih2 * (psi[p + s, i] - 2.0 * c0 + psi[p - s, i])
                for a in range(3):
                    s = st[pairs[a][0]]
                    t = st[pairs[a][1]]
                    lap = lap + 0.5 * ih2 * coef[q, 3 + a] * (
                        psi[p + s + t, i] - psi[p + s - t, i] - psi[p - s + t, i] + psi[p - s - t, i])
                acc[i] = -lap
                v[i] = c0
            for a in range(3):
                for k in range(nk):
                    for comp in range(4):
                        acc[comp] = acc[comp] + coef[q, 6 + 8 * a + k] * phase[k, comp] * d1[a][perm[k, comp]]
            for k in range(nk):
                for comp in range(4):
                    acc[comp] = acc[comp] + coef[q, 30 + k] * phase[k, comp] * v[perm[k, comp]]
            for i in range(4):
                out[q, i] = acc[i]
    return out_arr
