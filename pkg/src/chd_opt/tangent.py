"""Linearized (tangent) sweep of the discrete forward scheme.

For a stored base trajectory and forcing ``(f1, f2, f3)`` the tangent
quantities obey, level by level,

    eta^n  = -lap xi^n + Psi''(phi^n) xi^n + f3^n
    v^n    = Pi^n [ avg(eta^n) grad phi^n + avg(mu^n) grad xi^n
                    - nu'(avg phi^n) avg(xi^n) u^n + f1^n ]
    J^{n+1} xi^{n+1} = xi^n/tau - div(avg(xi^n) u^n + avg(phi^n) v^n)
                       - theta0 lap xi^n + f2^n

where ``Pi^n`` is the Darcy projection with ``K = 1/nu(avg phi^n)`` (so
``div v^n = 0`` and ``q^n`` is its pressure) and ``J^{n+1}`` the Newton
matrix at ``phi^{n+1}``.  With ``f1 = f3 = 0`` and ``f2 = h`` this is the
exact derivative of ``R -> phi`` for the discrete scheme.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from chd_opt.darcy import darcy_project, face_mobility, face_viscosity
from chd_opt.grid import VectorField, divergence, face_average, gradient, laplacian_neumann
from chd_opt.materials import psi
from chd_opt.state import CHDSystem, StateSnapshot, Trajectory


@dataclass
class TangentForcing:
    """Forcing sequences; ``f1``/``f3`` per time level, ``f2`` per step."""

    f1: list | None = None
    f2: np.ndarray | None = None
    f3: np.ndarray | None = None

    def __post_init__(self):
        if self.f1 is not None:
            for n, f in enumerate(self.f1):
                if f is not None and f.boundary_normal_max() != 0.0:
                    raise ValueError(f"f1 at level {n} has nonzero boundary normal")

    def level(self, n):
        f1 = None if self.f1 is None else self.f1[n]
        f3 = None if self.f3 is None else self.f3[n]
        return f1, f3


@dataclass
class TangentSnapshot:
    xi: np.ndarray
    eta: np.ndarray
    v: VectorField
    q: np.ndarray


@dataclass
class TangentTrajectory:
    snapshots: list

    @property
    def xi(self) -> np.ndarray:
        return np.stack([s.xi for s in self.snapshots])

    @property
    def eta(self) -> np.ndarray:
        return np.stack([s.eta for s in self.snapshots])


def tangent_level(system: CHDSystem, base: StateSnapshot, xi, f1=None, f3=None) -> TangentSnapshot:
    """Complete ``eta``, ``v``, ``q`` at one level from ``xi``."""
    grid = system.grid
    eta = -laplacian_neumann(grid, xi) + psi(system.potential, base.phi, 2) * xi
    if f3 is not None:
        eta = eta + f3
    avg_xi = face_average(grid, xi)
    force = (
        face_average(grid, eta) * gradient(grid, base.phi)
        + face_average(grid, base.mu) * gradient(grid, xi)
        - face_viscosity(grid, base.phi, system.viscosity, 1) * avg_xi * base.darcy.velocity
    )
    if f1 is not None:
        force = force + f1
    k = face_mobility(grid, base.phi, system.viscosity)
    v, q, _ = darcy_project(grid, k, force, None, system.options.cg_tol, system.options.cg_maxiter)
    return TangentSnapshot(xi=xi, eta=eta, v=v, q=q)


def tangent_rhs(system: CHDSystem, base: StateSnapshot, prev: TangentSnapshot, tau, f2=None):
    grid = system.grid
    flux = face_average(grid, prev.xi) * base.darcy.velocity + face_average(grid, base.phi) * prev.v
    rhs = prev.xi / tau - divergence(grid, flux) - system.potential.theta0 * laplacian_neumann(grid, prev.xi)
    if f2 is not None:
        rhs = rhs + f2
    return rhs


def tangent_step(system: CHDSystem, base_n: StateSnapshot, base_np1: StateSnapshot,
                 prev: TangentSnapshot, f2, tau, lu=None, f1_next=None, f3_next=None) -> TangentSnapshot:
    """Advance the tangent from level ``n`` to ``n + 1``.

    ``lu`` is the factorized Newton matrix at ``base_np1.phi``; it is built
    when not supplied.
    """
    if lu is None:
        lu = system.factor(base_np1.phi, tau)
    rhs = tangent_rhs(system, base_n, prev, tau, f2)
    xi = lu.solve(rhs.ravel()).reshape(system.grid.shape)
    return tangent_level(system, base_np1, xi, f1_next, f3_next)


def ds_apply(system: CHDSystem, traj: Trajectory, h=None, forcing: TangentForcing | None = None,
             xi0=None) -> TangentTrajectory:
    """Tangent trajectory for control direction ``h`` (or general forcing).

    ``h`` has one field per step, like the control; it is used as ``f2`` when
    ``forcing`` is not given.  ``xi`` starts from zero unless ``xi0`` is set.
    """
    if forcing is None:
        forcing = TangentForcing(f2=None if h is None else np.asarray(h, dtype=float))
    grid = system.grid
    xi = np.zeros(grid.shape) if xi0 is None else np.asarray(xi0, dtype=float)
    f1, f3 = forcing.level(0)
    snaps = [tangent_level(system, traj.snapshots[0], xi, f1, f3)]
    for n in range(traj.steps):
        f2 = None if forcing.f2 is None else forcing.f2[n]
        f1, f3 = forcing.level(n + 1)
        snaps.append(
            tangent_step(system, traj.snapshots[n], traj.snapshots[n + 1], snaps[-1], f2,
                         traj.tau, traj.factor(system, n + 1), f1, f3)
        )
    return TangentTrajectory(snaps)
