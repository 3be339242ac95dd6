# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stencil kernels; same contracts as ``_pykernels``."""
import numpy as np
from libc.math cimport sqrt


def laplacian(double[:, ::1] f, double hx, double hy):
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1], i, j
    cdef double ax = 1.0 / (hx * hx), ay = 1.0 / (hy * hy), d
    out_arr = np.zeros((nx, ny))
    cdef double[:, ::1] out = out_arr
    for i in range(nx - 1):
        for j in range(ny):
            d = (f[i + 1, j] - f[i, j]) * ax
            out[i, j] += d
            out[i + 1, j] -= d
    for i in range(nx):
        for j in range(ny - 1):
            d = (f[i, j + 1] - f[i, j]) * ay
            out[i, j] += d
            out[i, j + 1] -= d
    return out_arr


def gradient(double[:, ::1] f, double hx, double hy):
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1], i, j
    gx_arr = np.zeros((nx + 1, ny))
    gy_arr = np.zeros((nx, ny + 1))
    cdef double[:, ::1] gx = gx_arr
    cdef double[:, ::1] gy = gy_arr
    for i in range(1, nx):
        for j in range(ny):
            gx[i, j] = (f[i, j] - f[i - 1, j]) / hx
    for i in range(nx):
        for j in range(1, ny):
            gy[i, j] = (f[i, j] - f[i, j - 1]) / hy
    return gx_arr, gy_arr


def divergence(double[:, ::1] gx, double[:, ::1] gy, double hx, double hy):
    cdef Py_ssize_t nx = gy.shape[0], ny = gx.shape[1], i, j
    out_arr = np.empty((nx, ny))
    cdef double[:, ::1] out = out_arr
    for i in range(nx):
        for j in range(ny):
            out[i, j] = (gx[i + 1, j] - gx[i, j]) / hx + (gy[i, j + 1] - gy[i, j]) / hy
    return out_arr


cdef void _apply(double[:, ::1] kx, double[:, ::1] ky, double[:, ::1] x,
                 double[:, ::1] out, double ax, double ay) noexcept nogil:
    # out = -div(K grad x), zero flux on boundary faces
    cdef Py_ssize_t nx = x.shape[0], ny = x.shape[1], i, j
    cdef double flux
    for i in range(nx):
        for j in range(ny):
            out[i, j] = 0.0
    for i in range(nx - 1):
        for j in range(ny):
            flux = kx[i + 1, j] * (x[i + 1, j] - x[i, j]) * ax
            out[i, j] -= flux
            out[i + 1, j] += flux
    for i in range(nx):
        for j in range(ny - 1):
            flux = ky[i, j + 1] * (x[i, j + 1] - x[i, j]) * ay
            out[i, j] -= flux
            out[i, j + 1] += flux


def varcoef_apply(double[:, ::1] kx, double[:, ::1] ky, double[:, ::1] x,
                  double hx, double hy):
    out_arr = np.empty((x.shape[0], x.shape[1]))
    cdef double[:, ::1] out = out_arr
    _apply(kx, ky, x, out, 1.0 / (hx * hx), 1.0 / (hy * hy))
    return out_arr


def varcoef_diagonal(double[:, ::1] kx, double[:, ::1] ky, double hx, double hy):
    cdef Py_ssize_t nx = kx.shape[0] - 1, ny = ky.shape[1] - 1, i, j
    cdef double ax = 1.0 / (hx * hx), ay = 1.0 / (hy * hy)
    d_arr = np.zeros((nx, ny))
    cdef double[:, ::1] d = d_arr
    for i in range(nx - 1):
        for j in range(ny):
            d[i, j] += kx[i + 1, j] * ax
            d[i + 1, j] += kx[i + 1, j] * ax
    for i in range(nx):
        for j in range(ny - 1):
            d[i, j] += ky[i, j + 1] * ay
            d[i, j + 1] += ky[i, j + 1] * ay
    return d_arr


cdef double _dot(double[:, ::1] a, double[:, ::1] b) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            s += a[i, j] * b[i, j]
    return s


def pcg_varcoef(double[:, ::1] kx, double[:, ::1] ky, rhs, double hx, double hy,
                double tol, Py_ssize_t maxiter):
    cdef Py_ssize_t nx = kx.shape[0] - 1, ny = ky.shape[1] - 1, i, j, it = 0
    cdef double ax = 1.0 / (hx * hx), ay = 1.0 / (hy * hy)
    b_arr = np.array(rhs, dtype=np.float64, order="C")
    b_arr -= b_arr.mean()
    cdef double[:, ::1] b = b_arr
    x_arr = np.zeros((nx, ny))
    cdef double[:, ::1] x = x_arr
    cdef double bnorm = sqrt(_dot(b, b))
    if bnorm == 0.0:
        return x_arr, 0, 0.0
    cdef double[:, ::1] dinv = 1.0 / varcoef_diagonal(kx, ky, hx, hy)
    cdef double[:, ::1] r = b_arr.copy()
    cdef double[:, ::1] z = np.empty((nx, ny))
    cdef double[:, ::1] p = np.empty((nx, ny))
    cdef double[:, ::1] ap = np.empty((nx, ny))
    cdef double rz, rz_new, alpha, beta, relres = 1.0, mean
    cdef bint restart = True
    with nogil:
        while it < maxiter:
            if restart:
                for i in range(nx):
                    for j in range(ny):
                        z[i, j] = dinv[i, j] * r[i, j]
                        p[i, j] = z[i, j]
                rz = _dot(r, z)
                restart = False
            it += 1
            _apply(kx, ky, p, ap, ax, ay)
            alpha = rz / _dot(p, ap)
            for i in range(nx):
                for j in range(ny):
                    x[i, j] += alpha * p[i, j]
                    r[i, j] -= alpha * ap[i, j]
            if sqrt(_dot(r, r)) <= tol * bnorm:
                _apply(kx, ky, x, ap, ax, ay)
                for i in range(nx):
                    for j in range(ny):
                        r[i, j] = b[i, j] - ap[i, j]
                relres = sqrt(_dot(r, r)) / bnorm
                if relres <= tol:
                    break
                restart = True
                continue
            for i in range(nx):
                for j in range(ny):
                    z[i, j] = dinv[i, j] * r[i, j]
            rz_new = _dot(r, z)
            beta = rz_new / rz
            rz = rz_new
            for i in range(nx):
                for j in range(ny):
                    p[i, j] = z[i, j] + beta * p[i, j]
        else:
            _apply(kx, ky, x, ap, ax, ay)
            for i in range(nx):
                for j in range(ny):
                    r[i, j] = b[i, j] - ap[i, j]
            relres = sqrt(_dot(r, r)) / bnorm
        mean = 0.0
        for i in range(nx):
            for j in range(ny):
                mean += x[i, j]
        mean /= nx * ny
        for i in range(nx):
            for j in range(ny):
                x[i, j] -= mean
    return x_arr, it, relres
