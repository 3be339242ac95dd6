"""Variable-coefficient Neumann pressure solve and Darcy velocity.

Darcy's law ``nu(phi) u = -grad P + mu grad phi`` with ``div u = S`` is
solved face-wise on the MAC grid: with ``K = 1/nu(avg phi)`` on faces and the
Korteweg force ``F = avg(mu) * grad(phi)``,

    -div(K grad P) = S - div(K F),    u = K (F - grad P),   mean(P) = 0.

Because the velocity is rebuilt from the same face gradients used in the
solve, ``div u = S`` holds to the linear-solver tolerance.  For fixed ``K``
the map ``F -> u`` (with ``S = 0``) is the self-adjoint projection used by
the tangent and adjoint sweeps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from chd_opt.grid import (
    Grid2D,
    LinearSolveReport,
    NonConvergence,
    VectorField,
    divergence,
    face_average,
    gradient,
    solve_variable_neumann,
)
from chd_opt.materials import ViscosityModel


class MeanError(ValueError):
    """Source term is not mean-zero, so the Neumann problem is incompatible."""


@dataclass
class DarcySolution:
    pressure: np.ndarray
    velocity: VectorField
    report: LinearSolveReport


def face_viscosity(grid: Grid2D, phi, visc: ViscosityModel, order: int = 0) -> VectorField:
    """``nu^(order)`` evaluated at face averages of ``phi``."""
    return face_average(grid, phi).map(lambda a: visc(a, order))


def face_mobility(grid: Grid2D, phi, visc: ViscosityModel) -> VectorField:
    """Face coefficient ``K = 1 / nu(avg phi)``."""
    return face_viscosity(grid, phi, visc).map(lambda v: 1.0 / v)


def korteweg_force(grid: Grid2D, phi, mu) -> VectorField:
    return face_average(grid, mu) * gradient(grid, phi)


def darcy_project(grid: Grid2D, k: VectorField, force: VectorField, source=None,
                  tol=1e-12, max_iter=None, strict=True):
    """Return ``(u, p, report)`` with ``u = k (force - grad p)`` and ``div u = source``."""
    rhs = -divergence(grid, k * force)
    if source is not None:
        rhs = rhs + source
    p, report = solve_variable_neumann(grid, k, rhs, tol=tol, max_iter=max_iter)
    if strict and not report.converged:
        raise NonConvergence(
            f"pressure solve stalled at relative residual {report.residual_norm:.3e}", report
        )
    u = k * (force - gradient(grid, p))
    return u, p, report


def check_mean_zero(S, what="S"):
    scale = float(np.sqrt(np.mean(np.square(S))))
    if abs(float(np.mean(S))) > 1e-10 * max(scale, 1e-300) and abs(float(np.mean(S))) > 1e-14:
        raise MeanError(f"{what} must have zero mean, got mean {float(np.mean(S)):.3e}")


def solve_pressure(grid: Grid2D, phi, mu, S, visc: ViscosityModel, tol=1e-12,
                   max_iter=None) -> DarcySolution:
    """Pressure and velocity for the state ``(phi, mu)`` with mass source ``S``.

    Raises
    ------
    MeanError
        ``S`` has nonzero mean.
    NonConvergence
        The PCG solve did not reach ``tol``.
    """
    if S is None:
        S = np.zeros(grid.shape)
    check_mean_zero(S)
    k = face_mobility(grid, phi, visc)
    u, p, report = darcy_project(grid, k, korteweg_force(grid, phi, mu), S, tol, max_iter)
    return DarcySolution(pressure=p, velocity=u, report=report)


def kinetic_energy(grid: Grid2D, sol: DarcySolution, phi, visc: ViscosityModel) -> float:
    """``sum_faces nu(avg phi) |u|^2 * hx * hy``; boundary faces carry u = 0."""
    nu = face_viscosity(grid, phi, visc)
    u = sol.velocity
    return float(np.sum(nu.ux * u.ux**2) + np.sum(nu.uy * u.uy**2)) * grid.cell_area
