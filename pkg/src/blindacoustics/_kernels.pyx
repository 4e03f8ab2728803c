# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled solver kernels: 7-point stencil product and Jacobi-PCG.

Same interface and semantics as :mod:`blindacoustics._fallback`.  Reductions
run serially in a fixed order so results are reproducible run to run.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "cython"


cdef void _matvec(const double* d, const double* cx, const double* cy, const double* cz,
                  const double* x, double* y, Py_ssize_t nx, Py_ssize_t ny,
                  Py_ssize_t nz) noexcept nogil:
    cdef Py_ssize_t i, j, k, c
    cdef Py_ssize_t sx = ny * nz, sy = nz
    cdef double acc
    for i in range(nx):
        for j in range(ny):
            c = (i * ny + j) * nz
            for k in range(nz):
                acc = d[c] * x[c]
                if k + 1 < nz:
                    acc -= cz[c] * x[c + 1]
                if k > 0:
                    acc -= cz[c - 1] * x[c - 1]
                if j + 1 < ny:
                    acc -= cy[c] * x[c + sy]
                if j > 0:
                    acc -= cy[c - sy] * x[c - sy]
                if i + 1 < nx:
                    acc -= cx[c] * x[c + sx]
                if i > 0:
                    acc -= cx[c - sx] * x[c - sx]
                y[c] = acc
                c += 1


cdef double _dot(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(n):
        s += a[i] * b[i]
    return s


def _check(arr, shape):
    if arr.shape != shape or arr.dtype != np.float64 or not arr.flags.c_contiguous:
        raise ValueError("kernel arrays must be C-contiguous float64 with the grid shape")


def stencil_matvec(diag, cx, cy, cz, x, out=None):
    """``out = A @ x`` for the symmetric 7-point operator (see the numpy fallback)."""
    shape = diag.shape
    for arr in (diag, cx, cy, cz, x):
        _check(arr, shape)
    if out is None:
        out = np.empty_like(x)
    _check(out, shape)
    cdef double[::1] d_ = diag.reshape(-1)
    cdef double[::1] cx_ = cx.reshape(-1)
    cdef double[::1] cy_ = cy.reshape(-1)
    cdef double[::1] cz_ = cz.reshape(-1)
    cdef double[::1] x_ = x.reshape(-1)
    cdef double[::1] y_ = out.reshape(-1)
    cdef Py_ssize_t nx = shape[0], ny = shape[1], nz = shape[2]
    with nogil:
        _matvec(&d_[0], &cx_[0], &cy_[0], &cz_[0], &x_[0], &y_[0], nx, ny, nz)
    return out


def pcg(diag, cx, cy, cz, b, x, double tol, Py_ssize_t maxiter):
    """Jacobi-preconditioned conjugate gradients, updating ``x`` in place.

    Returns ``(iterations, history)`` with the relative recursive residual
    after each iteration (entry 0 is the initial residual).
    """
    shape = diag.shape
    for arr in (diag, cx, cy, cz, b, x):
        _check(arr, shape)
    cdef Py_ssize_t nx = shape[0], ny = shape[1], nz = shape[2]
    cdef Py_ssize_t n = nx * ny * nz
    cdef double[::1] d_ = diag.reshape(-1)
    cdef double[::1] cx_ = cx.reshape(-1)
    cdef double[::1] cy_ = cy.reshape(-1)
    cdef double[::1] cz_ = cz.reshape(-1)
    cdef double[::1] b_ = b.reshape(-1)
    cdef double[::1] x_ = x.reshape(-1)

    cdef double bnorm = sqrt(_dot(&b_[0], &b_[0], n))
    if bnorm == 0.0:
        x[...] = 0.0
        return 0, np.zeros(1)

    cdef double[::1] inv_d = 1.0 / diag.reshape(-1)
    cdef double[::1] r = np.empty(n)
    cdef double[::1] z = np.empty(n)
    cdef double[::1] p = np.empty(n)
    cdef double[::1] q = np.empty(n)
    hist_arr = np.empty(maxiter + 1)
    cdef double[::1] hist = hist_arr
    cdef Py_ssize_t i, it = 0
    cdef double rz, rz_new, pq, alpha, beta, rr, ri

    with nogil:
        _matvec(&d_[0], &cx_[0], &cy_[0], &cz_[0], &x_[0], &q[0], nx, ny, nz)
        rz = 0.0
        rr = 0.0
        for i in range(n):
            ri = b_[i] - q[i]
            r[i] = ri
            z[i] = ri * inv_d[i]
            p[i] = z[i]
            rz += ri * z[i]
            rr += ri * ri
        hist[0] = sqrt(rr) / bnorm
        while hist[it] > tol and it < maxiter:
            _matvec(&d_[0], &cx_[0], &cy_[0], &cz_[0], &p[0], &q[0], nx, ny, nz)
            pq = _dot(&p[0], &q[0], n)
            if pq <= 0.0 or rz == 0.0:
                break
            alpha = rz / pq
            rz_new = 0.0
            rr = 0.0
            for i in range(n):
                x_[i] += alpha * p[i]
                ri = r[i] - alpha * q[i]
                r[i] = ri
                z[i] = ri * inv_d[i]
                rz_new += ri * z[i]
                rr += ri * ri
            it += 1
            hist[it] = sqrt(rr) / bnorm
            beta = rz_new / rz
            for i in range(n):
                p[i] = z[i] + beta * p[i]
            rz = rz_new
    return it, hist_arr[: it + 1].copy()
