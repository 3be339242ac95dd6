"""Backward sweep: exact transpose of the discrete tangent sweep.

For forcing ``(g1, g2, g3, g4)`` the sweep returns ``(w, pi, rho, zeta)``
such that, for every tangent forcing ``(f1, f2, f3)`` with ``xi^0 = 0``,

    tau sum_n [<g1^n, v^n> + <g2^n, xi^n> + <g3^n, eta^n>] + <g4, xi^N>
        = tau sum_{n<N} <f2^n, rho^{n+1}>
          + tau sum_n [<f1^n, w^n> + <f3^n, zeta^n>]

with area-weighted inner products.  ``rho^{n+1}`` is the costate paired with
the control on step ``n`` (so the reduced gradient on that step is
``rho^{n+1} + beta R^n``); ``rho^0`` is the sensitivity to the initial datum.

How the transposed blocks line up with the continuous adjoint system:

=====================================  =====================================
discrete block (level n)               continuous term
=====================================  =====================================
``J^{-T}`` of the Newton matrix        ``-d_t rho + lap zeta - Psi'' zeta``
``avg^T(u . grad rho)``                ``-u* . grad rho``
``avg(phi) grad rho`` fed to ``Pi``    ``-rho grad phi*`` in Darcy law
``Pi`` (self-adjoint projection)       ``nu w = grad pi + ...``, ``div w = 0``
``avg^T(w . grad phi)``                ``w . grad phi*`` in the zeta relation
``-div(avg(mu) w)``                    ``w . grad mu*``
``-avg^T(nu'(phi) u w)``               ``nu'(phi*) u* . w``
=====================================  =====================================
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from chd_opt.darcy import darcy_project, face_mobility, face_viscosity
from chd_opt.grid import (
    VectorField,
    divergence,
    face_average,
    face_average_T,
    gradient,
    laplacian_neumann,
)
from chd_opt.materials import psi
from chd_opt.state import CHDSystem, Trajectory


@dataclass
class AdjointForcing:
    """``g1`` (faces), ``g2``, ``g3`` per time level; terminal datum ``g4``."""

    g1: list | None = None
    g2: np.ndarray | None = None
    g3: np.ndarray | None = None
    g4: np.ndarray | None = None

    def __post_init__(self):
        if self.g1 is not None:
            for n, g in enumerate(self.g1):
                if g is not None and g.boundary_normal_max() != 0.0:
                    raise ValueError(f"g1 at level {n} has nonzero boundary normal")


@dataclass
class AdjointSnapshot:
    rho: np.ndarray
    zeta: np.ndarray
    w: VectorField
    pi: np.ndarray


@dataclass
class AdjointTrajectory:
    snapshots: list
    tau: float

    @property
    def rho(self) -> np.ndarray:
        return np.stack([s.rho for s in self.snapshots])

    @property
    def rho_control(self) -> np.ndarray:
        """Costate on the control grid: entry ``n`` pairs with ``R^n``."""
        return np.stack([s.rho for s in self.snapshots[1:]])

    @property
    def zeta(self) -> np.ndarray:
        return np.stack([s.zeta for s in self.snapshots])


def adjoint_sweep(system: CHDSystem, traj: Trajectory, forcing: AdjointForcing) -> AdjointTrajectory:
    """March the transposed tangent map backward from ``t = T``."""
    grid, tau, theta0 = system.grid, traj.tau, system.potential.theta0
    N = traj.steps
    snaps = [None] * (N + 1)
    lam = None  # multiplier of step n -> n+1, raw units
    for n in range(N, -1, -1):
        base = traj.snapshots[n]
        u = base.darcy.velocity
        x = np.zeros(grid.shape)
        if forcing.g2 is not None:
            x = x + tau * forcing.g2[n]
        if n == N and forcing.g4 is not None:
            x = x + forcing.g4
        vsrc = VectorField.zeros(grid)
        if forcing.g1 is not None and forcing.g1[n] is not None:
            vsrc = vsrc + tau * forcing.g1[n]
        if lam is not None:
            glam = gradient(grid, lam)
            x += lam / tau - theta0 * laplacian_neumann(grid, lam) + face_average_T(grid, u * glam)
            vsrc = vsrc + face_average(grid, base.phi) * glam
        k = face_mobility(grid, base.phi, system.viscosity)
        W, p, _ = darcy_project(grid, k, vsrc, None, system.options.cg_tol, system.options.cg_maxiter)
        gphi = gradient(grid, base.phi)
        e = face_average_T(grid, W * gphi)
        if forcing.g3 is not None:
            e = e + tau * forcing.g3[n]
        x += (
            -divergence(grid, face_average(grid, base.mu) * W)
            - face_average_T(grid, face_viscosity(grid, base.phi, system.viscosity, 1) * u * W)
            - laplacian_neumann(grid, e)
            + psi(system.potential, base.phi, 2) * e
        )
        if n > 0:
            lam = traj.factor(system, n).solve(x.ravel(), trans="T").reshape(grid.shape)
            rho = lam / tau
        else:
            rho = x
        snaps[n] = AdjointSnapshot(rho=rho, zeta=e / tau, w=W / tau, pi=-p / tau)
    return AdjointTrajectory(snaps, tau)


def trapezoid_weights(N: int) -> np.ndarray:
    w = np.ones(N + 1)
    w[0] = w[-1] = 0.5
    return w


def costate(system: CHDSystem, traj: Trajectory, cost) -> AdjointTrajectory:
    """Costate for the tracking cost ``cost`` (a :class:`chd_opt.control.CostConfig`).

    ``g4 = alpha1 (phi^N - phi_Omega)`` and ``g2 = alpha2 w_n (phi^n - phi_Q^n)``
    with the trapezoid weights ``w_n`` of the time quadrature folded in.
    """
    phi = traj.phi
    w = trapezoid_weights(traj.steps)[:, None, None]
    g2 = cost.alpha2 * w * (phi - cost.phi_Q_levels(traj.steps))
    g4 = cost.alpha1 * (phi[-1] - cost.phi_Omega)
    return adjoint_sweep(system, traj, AdjointForcing(g2=g2, g4=g4))


def reduced_gradient(adj: AdjointTrajectory, R, beta: float) -> np.ndarray:
    """``rho + beta R`` per control step: the L2(Q) representative of the derivative."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return adj.rho_control + beta * np.asarray(R, dtype=float)
