# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled operator-norm kernel (one-sided Jacobi on complex matrices)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, copysign
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double JACOBI_TOL = 1e-15
cdef int MAX_SWEEPS = 60


cdef double _largest_singular_value(const double complex[:, ::1] a,
                                    double* re, double* im, int k) noexcept nogil:
    cdef int i, j, p, q, sweep
    cdef double alpha, beta, gr, gi, g, zeta, t, c, s, ur, ui, apr, api, aqr, aqi
    cdef double best, col
    cdef bint rotated

    for i in range(k):
        for j in range(k):
            re[i * k + j] = a[i, j].real
            im[i * k + j] = a[i, j].imag

    for sweep in range(MAX_SWEEPS):
        rotated = False
        for p in range(k - 1):
            for q in range(p + 1, k):
                alpha = 0.0
                beta = 0.0
                gr = 0.0
                gi = 0.0
                for i in range(k):
                    apr = re[i * k + p]
                    api = im[i * k + p]
                    aqr = re[i * k + q]
                    aqi = im[i * k + q]
                    alpha += apr * apr + api * api
                    beta += aqr * aqr + aqi * aqi
                    # conj(a_ip) * a_iq
                    gr += apr * aqr + api * aqi
                    gi += apr * aqi - api * aqr
                g = sqrt(gr * gr + gi * gi)
                if g == 0.0 or g <= JACOBI_TOL * sqrt(alpha * beta):
                    continue
                rotated = True
                # phase of the inner product; column q is rotated by its conjugate
                ur = gr / g
                ui = -gi / g
                zeta = (beta - alpha) / (2.0 * g)
                t = copysign(1.0, zeta) / (fabs(zeta) + sqrt(1.0 + zeta * zeta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = c * t
                for i in range(k):
                    apr = re[i * k + p]
                    api = im[i * k + p]
                    aqr = re[i * k + q] * ur - im[i * k + q] * ui
                    aqi = re[i * k + q] * ui + im[i * k + q] * ur
                    re[i * k + p] = c * apr - s * aqr
                    im[i * k + p] = c * api - s * aqi
                    re[i * k + q] = s * apr + c * aqr
                    im[i * k + q] = s * api + c * aqi
        if not rotated:
            break

    best = 0.0
    for j in range(k):
        col = 0.0
        for i in range(k):
            col += re[i * k + j] * re[i * k + j] + im[i * k + j] * im[i * k + j]
        if col > best:
            best = col
    return sqrt(best)


def opnorms(const double complex[:, :, ::1] mats):
    """Largest singular value of each square matrix in a ``(n, k, k)`` stack."""
    cdef Py_ssize_t n = mats.shape[0]
    cdef int k = <int> mats.shape[1]
    cdef Py_ssize_t b
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] out_v = out
    cdef double* re
    cdef double* im
    if mats.shape[2] != k:
        raise ValueError("matrices must be square")
    if k == 0:
        out[:] = 0.0
        return out
    re = <double*> malloc(k * k * sizeof(double))
    im = <double*> malloc(k * k * sizeof(double))
    if re == NULL or im == NULL:
        free(re)
        free(im)
        raise MemoryError()
    try:
        with nogil:
            for b in range(n):
                out_v[b] = _largest_singular_value(mats[b], re, im, k)
    finally:
        free(re)
        free(im)
    return out
