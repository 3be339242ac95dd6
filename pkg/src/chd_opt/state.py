"""Forward solver for the Cahn-Hilliard-Darcy system with mass sources.

One step ``n -> n+1`` of the first-order convex-splitting scheme:

1. the Darcy velocity ``u^n`` stored in snapshot ``n`` (computed from
   ``phi^n``, ``mu^n`` and ``S^n``) advects ``phi^n`` explicitly;
2. ``phi^{n+1}`` solves, by safeguarded Newton,

       (phi^{n+1} - phi^n)/tau + div(avg(phi^n) u^n)
           = lap(-lap phi^{n+1} + F'(phi^{n+1}) - theta0 phi^n) + S^n + R^n;

3. snapshot ``n+1`` stores ``mu^{n+1} = -lap phi^{n+1} + Psi'(phi^{n+1})``
   and the Darcy solution at the new state with source ``S^{n+1}``.

The step therefore depends on ``phi^n`` only, which keeps its linearization
(``chd_opt.tangent``) and transpose (``chd_opt.adjoint``) compact.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from chd_opt.darcy import DarcySolution, kinetic_energy, solve_pressure
from chd_opt.grid import Grid2D, divergence, face_average, gradient, laplacian_neumann
from chd_opt.materials import DomainError, PotentialParams, ViscosityModel, entropy_F, psi

log = logging.getLogger(__name__)


class SeparationError(DomainError):
    """Phase field reached the pure phases with the singular potential."""


class NewtonFailure(RuntimeError):
    """Newton iteration for the implicit step did not converge."""


class ConstraintError(RuntimeError):
    """The running mean left the admissible window ``|mean| <= 1 - delta0``."""


@dataclass
class SolverOptions:
    newton_tol: float = 1e-11
    newton_maxiter: int = 50
    cg_tol: float = 1e-12
    cg_maxiter: int | None = None
    separation_floor: float = 1e-8
    delta0: float | None = None
    factor_cache_bytes: int = 400_000_000


@dataclass
class CHDSystem:
    """Grid, material laws and solver settings shared by every sweep."""

    grid: Grid2D
    potential: PotentialParams
    viscosity: ViscosityModel
    options: SolverOptions = field(default_factory=SolverOptions)

    def chemical_potential(self, phi):
        return -laplacian_neumann(self.grid, phi) + psi(self.potential, phi, 1)

    def energy(self, phi) -> float:
        g = gradient(self.grid, phi)
        grad2 = float(np.sum(g.ux**2) + np.sum(g.uy**2))
        return self.grid.cell_area * (0.5 * grad2 + float(np.sum(psi(self.potential, phi, 0))))

    def jacobian(self, phi_next, tau):
        """Newton matrix ``I/tau + L^2 - L diag(F''(phi_next))`` (sparse CSC)."""
        L = self.grid.laplacian_matrix
        n = L.shape[0]
        f2 = entropy_F(self.potential, phi_next.ravel(), 2)
        return (sp.identity(n) / tau + L @ L - L @ sp.diags(f2)).tocsc()

    def factor(self, phi_next, tau):
        return splu(self.jacobian(phi_next, tau))


@dataclass
class StateSnapshot:
    t: float
    phi: np.ndarray
    mu: np.ndarray
    darcy: DarcySolution
    energy: float
    phi_mean: float
    sep_margin: float
    S: np.ndarray
    newton_iterations: int = 0
    mu_split: np.ndarray | None = None


@dataclass
class SourceSchedule:
    """Mass sources on the time grid.

    ``S`` has one mean-zero field per time level (``N + 1``); the control
    ``R`` is piecewise constant with one field per step (``N``).
    """

    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        if self.S.shape[0] != self.R.shape[0] + 1:
            raise ValueError("S needs one more time level than R")
        for n, s in enumerate(self.S):
            if abs(float(np.mean(s))) > 1e-12:
                raise ValueError(f"S at level {n} has mean {float(np.mean(s)):.3e}")

    @property
    def steps(self) -> int:
        return self.R.shape[0]

    @classmethod
    def zeros(cls, grid: Grid2D, steps: int) -> "SourceSchedule":
        return cls(np.zeros((steps + 1,) + grid.shape), np.zeros((steps,) + grid.shape))

    def with_control(self, R) -> "SourceSchedule":
        return SourceSchedule(self.S, R)

    def check_running_mean(self, phi0_mean: float, tau: float, delta0: float):
        """Raise :class:`ConstraintError` when ``|mean(phi0) + int mean R|`` exceeds ``1 - delta0``."""
        running = phi0_mean + tau * np.cumsum(self.R.mean(axis=(1, 2)))
        bad = np.nonzero(np.abs(running) > 1.0 - delta0)[0]
        if bad.size:
            raise ConstraintError(
                f"running mean {running[bad[0]]:.6f} leaves [-1+delta0, 1-delta0] at step {bad[0]}"
            )


@dataclass
class Trajectory:
    snapshots: list
    tau: float
    schedule: SourceSchedule
    config_hash: str = ""
    _factors: dict = field(default_factory=dict, repr=False)

    @property
    def steps(self) -> int:
        return len(self.snapshots) - 1

    @property
    def phi(self) -> np.ndarray:
        return np.stack([s.phi for s in self.snapshots])

    @property
    def mu(self) -> np.ndarray:
        return np.stack([s.mu for s in self.snapshots])

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def factor(self, system: CHDSystem, n: int):
        """LU factor of the Newton matrix that produced level ``n`` (n >= 1)."""
        lu = self._factors.get(n)
        if lu is None:
            lu = system.factor(self.snapshots[n].phi, self.tau)
            used = sum(f.L.nnz + f.U.nnz for f in self._factors.values()) * 12
            if used < system.options.factor_cache_bytes:
                self._factors[n] = lu
        return lu


def _snapshot(system: CHDSystem, t, phi, S, newton_iterations=0, mu_split=None) -> StateSnapshot:
    grid = system.grid
    mu = system.chemical_potential(phi)
    darcy = solve_pressure(grid, phi, mu, S, system.viscosity,
                           tol=system.options.cg_tol, max_iter=system.options.cg_maxiter)
    return StateSnapshot(
        t=float(t),
        phi=phi,
        mu=mu,
        darcy=darcy,
        energy=system.energy(phi),
        phi_mean=grid.mean(phi),
        sep_margin=float(1.0 - np.abs(phi).max()),
        S=np.asarray(S, dtype=float),
        newton_iterations=newton_iterations,
        mu_split=mu if mu_split is None else mu_split,
    )


def initial_state(system: CHDSystem, phi0, S0=None) -> StateSnapshot:
    """Snapshot at ``t = 0``: chemical potential, Darcy fields and energy of ``phi0``."""
    phi0 = np.array(phi0, dtype=float)
    if phi0.shape != system.grid.shape:
        raise ValueError(f"phi0 has shape {phi0.shape}, grid is {system.grid.shape}")
    if system.potential.singular and np.abs(phi0).max() >= 1.0:
        raise SeparationError("initial datum touches the pure phases")
    if abs(phi0.mean()) >= 1.0:
        raise ValueError("initial mean must lie in (-1, 1)")
    if S0 is None:
        S0 = np.zeros(system.grid.shape)
    return _snapshot(system, 0.0, phi0, S0)


def advection(system: CHDSystem, phi, u) -> np.ndarray:
    """Conservative ``div(avg(phi) u)``."""
    return divergence(system.grid, face_average(system.grid, phi) * u)


def _newton(system: CHDSystem, phi, explicit, tau):
    """Solve ``x/tau - lap(-lap x + F'(x)) = explicit`` for ``x``."""
    grid, pot, opts = system.grid, system.potential, system.options
    concave = pot.theta0 * phi

    def residual(x):
        return x / tau - laplacian_neumann(grid, -laplacian_neumann(grid, x)
                                          + entropy_F(pot, x, 1) - concave) - explicit

    x = phi.copy()
    floor = 1.0 - opts.separation_floor
    for it in range(1, opts.newton_maxiter + 1):
        res = residual(x)
        lu = system.factor(x, tau)
        dx = -lu.solve(res.ravel()).reshape(grid.shape)
        step = 1.0
        if pot.singular:
            while np.abs(x + step * dx).max() > floor:
                step *= 0.5
                if step < 1e-12:
                    raise SeparationError("Newton safeguard could not keep |phi| < 1")
        x = x + step * dx
        if step == 1.0 and np.abs(dx).max() <= opts.newton_tol:
            return x, it
    raise NewtonFailure(f"Newton did not converge in {opts.newton_maxiter} iterations")


def step(system: CHDSystem, prev: StateSnapshot, R, tau: float, S_next=None) -> StateSnapshot:
    """Advance one time step; ``prev.S`` is the mass source used on this step."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    grid = system.grid
    if S_next is None:
        S_next = np.zeros(grid.shape)
    adv = advection(system, prev.phi, prev.darcy.velocity)
    explicit = prev.phi / tau - adv + prev.S + np.asarray(R, dtype=float)
    phi_next, its = _newton(system, prev.phi, explicit, tau)
    mu_split = (-laplacian_neumann(grid, phi_next) + entropy_F(system.potential, phi_next, 1)
                - system.potential.theta0 * prev.phi)
    return _snapshot(system, prev.t + tau, phi_next, S_next, its, mu_split)


def config_hash(system: CHDSystem, phi0, schedule: SourceSchedule, tau: float) -> str:
    h = hashlib.sha256()
    h.update(repr((system.grid, system.potential, system.viscosity, tau)).encode())
    for arr in (phi0, schedule.S, schedule.R):
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def run(system: CHDSystem, phi0, schedule: SourceSchedule, T: float, tau: float) -> Trajectory:
    """March ``N = T / tau`` steps and keep every snapshot in memory."""
    N = int(round(T / tau))
    if not np.isclose(N * tau, T, rtol=1e-12, atol=1e-14):
        raise ValueError("T must be an integer multiple of tau")
    if schedule.steps != N:
        raise ValueError(f"schedule has {schedule.steps} control steps, run needs {N}")
    delta0 = system.options.delta0
    snap = initial_state(system, phi0, schedule.S[0])
    if delta0 is not None:
        schedule.check_running_mean(snap.phi_mean, tau, delta0)
    snaps = [snap]
    for n in range(N):
        snap = step(system, snap, schedule.R[n], tau, schedule.S[n + 1])
        if delta0 is not None and abs(snap.phi_mean) > 1.0 - delta0:
            raise ConstraintError(f"|mean(phi)| = {abs(snap.phi_mean):.6f} at step {n + 1}")
        snaps.append(snap)
    log.debug("run finished: %d steps, min separation %.3e", N, min(s.sep_margin for s in snaps))
    return Trajectory(snaps, tau, schedule, config_hash(system, phi0, schedule, tau))


def energy_identity_residual(system: CHDSystem, traj: Trajectory) -> np.ndarray:
    """Per-step defect of the discrete energy balance.

    ``res_n = sources^{n+1} - (E^{n+1} - E^n)/tau - |grad mu^{n+1}|^2 - kinetic^{n+1}``
    with ``sources = int S (P + (1 - phi) mu) + int R mu``, where ``mu`` is
    the chemical potential the scheme actually used on the step (implicit
    convex part, explicit concave part).  Without flow this is exactly the
    nonnegative numerical dissipation of the splitting divided by ``tau``.
    """
    if traj.steps < 1:
        raise ValueError("need at least two time levels")
    grid, tau = system.grid, traj.tau
    out = np.empty(traj.steps)
    for n in range(traj.steps):
        a, b = traj.snapshots[n], traj.snapshots[n + 1]
        mu = b.mu_split
        gmu = gradient(grid, mu)
        diss = grid.cell_area * float(np.sum(gmu.ux**2) + np.sum(gmu.uy**2))
        kin = kinetic_energy(grid, b.darcy, b.phi, system.viscosity)
        src = grid.inner(b.S, b.darcy.pressure + (1.0 - b.phi) * mu)
        src += grid.inner(traj.schedule.R[n], mu)
        out[n] = src - (b.energy - a.energy) / tau - diss - kin
    return out


def diagnostics_rows(system: CHDSystem, traj: Trajectory):
    """Rows ``(t, energy, mass, min_phi, max_phi, grad_mu_sq, kinetic)``."""
    grid = system.grid
    rows = []
    for s in traj.snapshots:
        gmu = gradient(grid, s.mu)
        rows.append((
            s.t,
            s.energy,
            s.phi_mean,
            float(s.phi.min()),
            float(s.phi.max()),
            grid.cell_area * float(np.sum(gmu.ux**2) + np.sum(gmu.uy**2)),
            kinetic_energy(grid, s.darcy, s.phi, system.viscosity),
        ))
    return rows
