"""Uniform cell-centered grid, MAC face fields and Neumann difference operators.

Scalar fields are plain ``(nx, ny)`` float arrays indexed ``[i, j]`` with
``x`` along axis 0.  Face-centered vector fields live in :class:`VectorField`
(x-faces ``(nx + 1, ny)``, y-faces ``(nx, ny + 1)``); the outermost faces hold
the normal component and are identically zero, which encodes ``u . n = 0``
and ``d_n f = 0``.

Cells and faces are both weighted by the cell area ``hx * hy`` in the discrete
inner products, so that ``divergence`` is exactly minus the adjoint of
``gradient`` and ``face_average_T`` is exactly the adjoint of
``face_average``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from chd_opt import kernels


class NonConvergence(RuntimeError):
    """An iterative solve stopped before reaching its tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid needs at least 4x4 cells, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("domain lengths must be positive")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @cached_property
    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates as two ``(nx, ny)`` arrays."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def mean(self, f) -> float:
        return float(np.mean(f))

    def integrate(self, f) -> float:
        return float(np.sum(f)) * self.cell_area

    def inner(self, f, g) -> float:
        return float(np.vdot(f, g)) * self.cell_area

    def norm(self, f) -> float:
        return np.sqrt(self.inner(f, f))

    @cached_property
    def laplacian_matrix(self) -> sp.csc_matrix:
        """Sparse Neumann Laplacian acting on C-order flattened cell arrays."""

        def lap1d(n, h):
            main = -2.0 * np.ones(n)
            main[0] = main[-1] = -1.0
            off = np.ones(n - 1)
            return sp.diags([off, main, off], [-1, 0, 1]) / (h * h)

        lx = lap1d(self.nx, self.hx)
        ly = lap1d(self.ny, self.hy)
        mat = sp.kron(lx, sp.identity(self.ny)) + sp.kron(sp.identity(self.nx), ly)
        return mat.tocsc()


@dataclass
class VectorField:
    """Face-normal components on the staggered (MAC) layout."""

    ux: np.ndarray
    uy: np.ndarray

    @classmethod
    def zeros(cls, grid: Grid2D) -> "VectorField":
        return cls(np.zeros((grid.nx + 1, grid.ny)), np.zeros((grid.nx, grid.ny + 1)))

    def copy(self) -> "VectorField":
        return VectorField(self.ux.copy(), self.uy.copy())

    def __add__(self, other):
        return VectorField(self.ux + other.ux, self.uy + other.uy)

    def __sub__(self, other):
        return VectorField(self.ux - other.ux, self.uy - other.uy)

    def __neg__(self):
        return VectorField(-self.ux, -self.uy)

    def __mul__(self, other):
        if isinstance(other, VectorField):
            return VectorField(self.ux * other.ux, self.uy * other.uy)
        return VectorField(self.ux * other, self.uy * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, VectorField):
            return VectorField(self.ux / other.ux, self.uy / other.uy)
        return VectorField(self.ux / other, self.uy / other)

    def map(self, fn) -> "VectorField":
        return VectorField(fn(self.ux), fn(self.uy))

    def boundary_normal_max(self) -> float:
        return float(
            max(
                np.abs(self.ux[0]).max(),
                np.abs(self.ux[-1]).max(),
                np.abs(self.uy[:, 0]).max(),
                np.abs(self.uy[:, -1]).max(),
            )
        )

    def zero_boundary(self) -> "VectorField":
        out = self.copy()
        out.ux[0] = out.ux[-1] = 0.0
        out.uy[:, 0] = out.uy[:, -1] = 0.0
        return out

    def max_abs(self) -> float:
        return float(max(np.abs(self.ux).max(), np.abs(self.uy).max()))


def face_inner(grid: Grid2D, a: VectorField, b: VectorField) -> float:
    return (float(np.vdot(a.ux, b.ux)) + float(np.vdot(a.uy, b.uy))) * grid.cell_area


def laplacian_neumann(grid: Grid2D, f) -> np.ndarray:
    """Five-point Laplacian with zero-flux ghost closure."""
    return kernels.laplacian(np.ascontiguousarray(f, dtype=float), grid.hx, grid.hy)


def gradient(grid: Grid2D, f) -> VectorField:
    gx, gy = kernels.gradient(np.ascontiguousarray(f, dtype=float), grid.hx, grid.hy)
    return VectorField(gx, gy)


def divergence(grid: Grid2D, g: VectorField) -> np.ndarray:
    return kernels.divergence(
        np.ascontiguousarray(g.ux, dtype=float),
        np.ascontiguousarray(g.uy, dtype=float),
        grid.hx,
        grid.hy,
    )


def face_average(grid: Grid2D, f) -> VectorField:
    """Arithmetic mean of the two adjacent cells on every interior face.

    Boundary faces get 0; every quantity built from a face average is
    multiplied by a face field whose boundary entries vanish.
    """
    ax = np.zeros((grid.nx + 1, grid.ny))
    ay = np.zeros((grid.nx, grid.ny + 1))
    ax[1:-1] = 0.5 * (f[1:] + f[:-1])
    ay[:, 1:-1] = 0.5 * (f[:, 1:] + f[:, :-1])
    return VectorField(ax, ay)


def face_average_T(grid: Grid2D, a: VectorField) -> np.ndarray:
    """Adjoint of :func:`face_average` in the area-weighted inner products."""
    out = np.zeros(grid.shape)
    out[:-1] += 0.5 * a.ux[1:-1]
    out[1:] += 0.5 * a.ux[1:-1]
    out[:, :-1] += 0.5 * a.uy[:, 1:-1]
    out[:, 1:] += 0.5 * a.uy[:, 1:-1]
    return out


@dataclass
class LinearSolveReport:
    iterations: int
    residual_norm: float
    converged: bool


def solve_spd(apply, rhs, tol=1e-10, max_iter=1000, precond=None, project_mean=False):
    """Preconditioned conjugate gradients for a symmetric positive operator.

    Parameters
    ----------
    apply : callable
        ``apply(x) -> A x`` on arrays shaped like ``rhs``.
    rhs : ndarray
    tol : float
        Relative residual target ``||A x - b|| <= tol ||b||``.
    max_iter : int
    precond : callable, optional
        Approximate inverse ``M^{-1} r``; identity when omitted.
    project_mean : bool
        Set for operators with a constant kernel: the right-hand side is
        projected to mean zero and the solution returned with zero mean.

    Returns
    -------
    x : ndarray
    report : LinearSolveReport
        ``residual_norm`` is the true relative residual of ``x``.
    """
    b = np.array(rhs, dtype=float)
    if project_mean:
        b -= b.mean()
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, LinearSolveReport(0, 0.0, True)
    if precond is None:
        precond = lambda r: r  # noqa: E731
    r = b.copy()
    z = precond(r)
    p = z.copy()
    rz = np.vdot(r, z)
    it = 0
    while it < max_iter:
        it += 1
        ap = apply(p)
        alpha = rz / np.vdot(p, ap)
        x += alpha * p
        r -= alpha * ap
        if np.linalg.norm(r) <= tol * bnorm:
            r = b - apply(x)
            if np.linalg.norm(r) <= tol * bnorm:
                break
            z = precond(r)
            p = z.copy()
            rz = np.vdot(r, z)
            continue
        z = precond(r)
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if project_mean:
        x -= x.mean()
    relres = float(np.linalg.norm(b - apply(x)) / bnorm)
    return x, LinearSolveReport(it, relres, relres <= tol)


def solve_variable_neumann(grid: Grid2D, k: VectorField, rhs, tol=1e-12, max_iter=None):
    """Solve ``-div(k grad p) = rhs`` with zero flux, ``mean(p) = 0``.

    Runs the fused PCG kernel; the right-hand side is projected to mean zero.
    """
    if max_iter is None:
        max_iter = 20 * (grid.nx + grid.ny) + 200
    x, it, relres = kernels.pcg_varcoef(
        np.ascontiguousarray(k.ux, dtype=float),
        np.ascontiguousarray(k.uy, dtype=float),
        np.asarray(rhs, dtype=float),
        grid.hx,
        grid.hy,
        float(tol),
        int(max_iter),
    )
    return x, LinearSolveReport(int(it), float(relres), relres <= tol)
