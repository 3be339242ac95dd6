"""Hessian of the reduced cost via tangent plus second adjoint sweeps.

The second adjoint reuses :func:`adjoint_sweep`; only the forcing differs.
Term map for :func:`second_order_forcing` (``xi, eta, v`` tangent, ``rho,
zeta, w`` costate, ``u, mu`` base state):

===========  ===============================================================
forcing      terms
===========  ===============================================================
``g1^n``     ``avg(xi) grad rho^{n+1}`` (n < N), ``-nu'(phi) avg(xi) w``
``g2^n``     ``avg^T(v . grad rho^{n+1})`` (n < N),
             ``F'''(phi) xi lap rho^n`` (n >= 1),
             ``-div(avg(eta) w)``, ``-avg^T(nu''(phi) avg(xi) u . w)``,
             ``-avg^T(nu'(phi) v . w)``, ``Psi''' xi zeta``,
             ``alpha2 w_n xi``
``g3^n``     ``avg^T(w . grad xi)``
``g4``       ``alpha1 xi^N``
===========  ===============================================================
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from chd_opt.adjoint import (
    AdjointForcing,
    AdjointTrajectory,
    adjoint_sweep,
    trapezoid_weights,
)
from chd_opt.darcy import face_viscosity
from chd_opt.grid import divergence, face_average, face_average_T, gradient, laplacian_neumann
from chd_opt.materials import entropy_F, psi
from chd_opt.state import CHDSystem, Trajectory
from chd_opt.tangent import TangentTrajectory, ds_apply


def second_order_forcing(system: CHDSystem, traj: Trajectory, adj: AdjointTrajectory,
                         tan: TangentTrajectory, cost) -> AdjointForcing:
    grid, pot, visc = system.grid, system.potential, system.viscosity
    N = traj.steps
    wq = trapezoid_weights(N)
    g1, g2, g3 = [], np.empty((N + 1,) + grid.shape), np.empty((N + 1,) + grid.shape)
    for n in range(N + 1):
        b, a, t = traj.snapshots[n], adj.snapshots[n], tan.snapshots[n]
        u = b.darcy.velocity
        axi = face_average(grid, t.xi)
        nu1 = face_viscosity(grid, b.phi, visc, 1)
        nu2 = face_viscosity(grid, b.phi, visc, 2)
        f1 = -(nu1 * axi * a.w)
        f2 = (
            -divergence(grid, face_average(grid, t.eta) * a.w)
            - face_average_T(grid, nu2 * axi * u * a.w)
            - face_average_T(grid, nu1 * t.v * a.w)
            + psi(pot, b.phi, 3) * t.xi * a.zeta
            + cost.alpha2 * wq[n] * t.xi
        )
        if n < N:
            grho = gradient(grid, adj.snapshots[n + 1].rho)
            f1 = f1 + axi * grho
            f2 += face_average_T(grid, t.v * grho)
        if n >= 1:
            f2 += entropy_F(pot, b.phi, 3) * t.xi * laplacian_neumann(grid, a.rho)
        g1.append(f1)
        g2[n] = f2
        g3[n] = face_average_T(grid, a.w * gradient(grid, t.xi))
    return AdjointForcing(g1=g1, g2=g2, g3=g3, g4=cost.alpha1 * tan.snapshots[N].xi)


def dt_apply(system: CHDSystem, traj: Trajectory, adj: AdjointTrajectory, h, cost) -> AdjointTrajectory:
    """Derivative of the control-to-costate map in direction ``h``."""
    tan = ds_apply(system, traj, h)
    return adjoint_sweep(system, traj, second_order_forcing(system, traj, adj, tan, cost))


def space_time_inner(grid, tau, a, b) -> float:
    """``tau sum_n <a^n, b^n>`` over control steps."""
    return tau * grid.cell_area * float(np.sum(np.asarray(a) * np.asarray(b)))


def hessian_vector(system, traj, adj, h, cost) -> np.ndarray:
    """Riesz representative ``beta h + rho~^h`` on the control grid."""
    return cost.beta * np.asarray(h, dtype=float) + dt_apply(system, traj, adj, h, cost).rho_control


def hessian_quadratic(system, traj, adj, h1, h2, cost) -> float:
    if not np.any(h2):
        return 0.0
    return space_time_inner(system.grid, traj.tau, hessian_vector(system, traj, adj, h1, cost), h2)


def activity_tolerance(grad) -> float:
    return 1e-8 * (1.0 + float(np.max(np.abs(grad))))


FREE, ACTIVE, AT_LOWER, AT_UPPER = 0, 1, 2, 3


@dataclass
class CriticalDirection:
    h: np.ndarray
    active_set_mask: np.ndarray
    classes: np.ndarray
    violations: dict

    @property
    def counts(self) -> dict:
        names = {FREE: "free", ACTIVE: "active", AT_LOWER: "at_lower", AT_UPPER: "at_upper"}
        return {names[k]: int(np.count_nonzero(self.classes == k)) for k in names}

    @property
    def is_zero(self) -> bool:
        return not np.any(self.h)


def critical_cone_project(h, R, rho, beta, r_min, r_max, tol_active=None) -> CriticalDirection:
    """Project ``h`` onto the critical cone at ``R``.

    Cells where ``|rho + beta R| > tol_active`` are strongly active and get
    ``h = 0``; at a bound off that set only the feasible sign survives.
    """
    h = np.asarray(h, dtype=float)
    R = np.asarray(R, dtype=float)
    grad = np.asarray(rho) + beta * R
    if tol_active is None:
        tol_active = activity_tolerance(grad)
    if tol_active <= 0:
        raise ValueError("tol_active must be positive")
    active = np.abs(grad) > tol_active
    lower = ~active & (R <= r_min)
    upper = ~active & (R >= r_max) & ~lower
    classes = np.full(h.shape, FREE, dtype=np.int8)
    classes[active] = ACTIVE
    classes[lower] = AT_LOWER
    classes[upper] = AT_UPPER
    violations = {
        "active": int(np.count_nonzero(active & (h != 0))),
        "at_lower": int(np.count_nonzero(lower & (h < 0))),
        "at_upper": int(np.count_nonzero(upper & (h > 0))),
    }
    out = h.copy()
    out[active] = 0.0
    out[lower] = np.maximum(out[lower], 0.0)
    out[upper] = np.minimum(out[upper], 0.0)
    return CriticalDirection(out, active, classes, violations)


@dataclass
class SufficiencyReport:
    """Sampled check only: positivity on finitely many cone directions proves nothing."""

    values: list
    ratios: list
    rejected: int

    @property
    def min_value(self) -> float:
        return min(self.values) if self.values else float("nan")

    @property
    def min_ratio(self) -> float:
        return min(self.ratios) if self.ratios else float("nan")

    @property
    def positive(self) -> bool:
        return bool(self.values) and self.min_value > 0


def sufficiency_probe(system, traj, adj, directions, cost) -> SufficiencyReport:
    """Evaluate ``J''[h, h]`` and ``J''[h, h] / |h|^2`` on each nonzero direction."""
    grid, tau = system.grid, traj.tau
    values, ratios, rejected = [], [], 0
    for d in directions:
        h = d.h if isinstance(d, CriticalDirection) else np.asarray(d, dtype=float)
        nh = space_time_inner(grid, tau, h, h)
        if nh == 0.0:
            rejected += 1
            continue
        q = hessian_quadratic(system, traj, adj, h, h, cost)
        values.append(q)
        ratios.append(q / nh)
    return SufficiencyReport(values, ratios, rejected)
