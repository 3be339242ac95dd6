"""Numpy implementations of the stencil kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them loop by loop.
Cell arrays have shape ``(nx, ny)``, x-face arrays ``(nx + 1, ny)`` and
y-face arrays ``(nx, ny + 1)``.  Boundary faces carry zero normal component.
"""
import numpy as np


def laplacian(f, hx, hy):
    out = np.zeros_like(f)
    fx = (f[1:, :] - f[:-1, :]) / (hx * hx)
    out[:-1, :] += fx
    out[1:, :] -= fx
    fy = (f[:, 1:] - f[:, :-1]) / (hy * hy)
    out[:, :-1] += fy
    out[:, 1:] -= fy
    return out


def gradient(f, hx, hy):
    nx, ny = f.shape
    gx = np.zeros((nx + 1, ny))
    gy = np.zeros((nx, ny + 1))
    gx[1:-1, :] = (f[1:, :] - f[:-1, :]) / hx
    gy[:, 1:-1] = (f[:, 1:] - f[:, :-1]) / hy
    return gx, gy


def divergence(gx, gy, hx, hy):
    return (gx[1:, :] - gx[:-1, :]) / hx + (gy[:, 1:] - gy[:, :-1]) / hy


def varcoef_apply(kx, ky, x, hx, hy):
    """Apply ``-div(K grad x)`` with zero-flux boundary faces."""
    gx, gy = gradient(x, hx, hy)
    return -divergence(kx * gx, ky * gy, hx, hy)


def varcoef_diagonal(kx, ky, hx, hy):
    nx = kx.shape[0] - 1
    ny = ky.shape[1] - 1
    d = np.zeros((nx, ny))
    d[:-1, :] += kx[1:-1, :] / (hx * hx)
    d[1:, :] += kx[1:-1, :] / (hx * hx)
    d[:, :-1] += ky[:, 1:-1] / (hy * hy)
    d[:, 1:] += ky[:, 1:-1] / (hy * hy)
    return d


def pcg_varcoef(kx, ky, rhs, hx, hy, tol, maxiter):
    """Jacobi-preconditioned CG for ``-div(K grad x) = rhs`` (Neumann).

    The right-hand side is projected onto mean-zero functions and the
    returned solution has zero mean.  Returns ``(x, iterations, relres)``
    where ``relres`` is the true relative residual of the returned iterate.
    """
    b = np.ascontiguousarray(rhs, dtype=float)
    b = b - b.mean()
    bnorm = np.sqrt(np.vdot(b, b))
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, 0, 0.0
    dinv = 1.0 / varcoef_diagonal(kx, ky, hx, hy)
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = np.vdot(r, z)
    it = 0
    relres = 1.0
    while it < maxiter:
        it += 1
        ap = varcoef_apply(kx, ky, p, hx, hy)
        alpha = rz / np.vdot(p, ap)
        x += alpha * p
        r -= alpha * ap
        if np.sqrt(np.vdot(r, r)) <= tol * bnorm:
            r = b - varcoef_apply(kx, ky, x, hx, hy)
            relres = np.sqrt(np.vdot(r, r)) / bnorm
            if relres <= tol:
                break
            # recursive residual drifted; restart from the true one
            z = dinv * r
            p = z.copy()
            rz = np.vdot(r, z)
            continue
        z = dinv * r
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    else:
        r = b - varcoef_apply(kx, ky, x, hx, hy)
        relres = np.sqrt(np.vdot(r, r)) / bnorm
    x -= x.mean()
    return x, it, float(relres)
