"""Tracking cost, admissible box, projected-gradient optimizer, optimality residuals."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from chd_opt.adjoint import costate, reduced_gradient, trapezoid_weights
from chd_opt.state import CHDSystem, SourceSchedule, Trajectory, run

log = logging.getLogger(__name__)


class StallError(RuntimeError):
    """Line search failed to produce sufficient decrease."""


@dataclass
class CostConfig:
    alpha1: float
    alpha2: float
    beta: float
    phi_Omega: np.ndarray
    phi_Q: np.ndarray  # (N + 1, nx, ny) or a single (nx, ny) field held in time

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.alpha1 == self.alpha2 == self.beta == 0:
            raise ValueError("alpha1, alpha2 and beta cannot all vanish")
        self.phi_Omega = np.asarray(self.phi_Omega, dtype=float)
        self.phi_Q = np.asarray(self.phi_Q, dtype=float)

    def phi_Q_levels(self, steps: int) -> np.ndarray:
        if self.phi_Q.ndim == 2:
            return np.broadcast_to(self.phi_Q, (steps + 1,) + self.phi_Q.shape)
        if self.phi_Q.shape[0] != steps + 1:
            raise ValueError(f"phi_Q has {self.phi_Q.shape[0]} levels, expected {steps + 1}")
        return self.phi_Q

    def scaled(self, c: float) -> "CostConfig":
        return CostConfig(c * self.alpha1, c * self.alpha2, c * self.beta, self.phi_Omega, self.phi_Q)


@dataclass
class AdmissibleSet:
    """Box ``[r_min, r_max]`` (scalars or per-cell arrays) plus monitored budgets."""

    r_min: np.ndarray | float
    r_max: np.ndarray | float
    delta0: float
    r0: float | None = None
    r1: float = np.inf

    def __post_init__(self):
        if np.any(np.asarray(self.r_min) > np.asarray(self.r_max)):
            raise ValueError("r_min exceeds r_max somewhere")
        if not self.delta0 > 0:
            raise ValueError("delta0 must be positive")
        if self.r0 is not None and not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if not self.r1 > 0:
            raise ValueError("r1 must be positive")

    @classmethod
    def for_initial(cls, grid, phi0, r_min, r_max, delta0, r1=np.inf) -> "AdmissibleSet":
        """``r0 = (1 - 2 delta0 - |mean phi0|) |Omega|``; delta0 must leave room."""
        m = abs(grid.mean(phi0))
        if not 0 < delta0 < (1 - m) / 2:
            raise ValueError(f"delta0 must lie in (0, {(1 - m) / 2:.6g})")
        return cls(r_min, r_max, delta0, (1 - 2 * delta0 - m) * grid.area, r1)


@dataclass
class ProjectionResult:
    R: np.ndarray
    l1_norm: float
    budget_violation: bool


def project_admissible(R, aset: AdmissibleSet, grid=None, tau=None) -> ProjectionResult:
    """Clamp into the box; the L1 budget is checked when ``grid`` and ``tau`` are given."""
    P = np.clip(np.asarray(R, dtype=float), aset.r_min, aset.r_max)
    l1 = float("nan")
    violation = False
    if grid is not None and tau is not None:
        l1 = tau * grid.cell_area * float(np.abs(P).sum())
        violation = aset.r0 is not None and l1 > aset.r0
    return ProjectionResult(P, l1, violation)


def cost(system: CHDSystem, traj: Trajectory, R, cfg: CostConfig) -> float:
    """Trapezoid in time for the tracking term, one value per step for ``R``."""
    grid, tau, N = system.grid, traj.tau, traj.steps
    phi = traj.phi
    d = phi - cfg.phi_Q_levels(N)
    w = trapezoid_weights(N)
    track = tau * grid.cell_area * float(np.einsum("n,nij->", w, d * d))
    final = grid.cell_area * float(np.sum((phi[-1] - cfg.phi_Omega) ** 2))
    reg = tau * grid.cell_area * float(np.sum(np.asarray(R) ** 2))
    return 0.5 * (cfg.alpha1 * final + cfg.alpha2 * track + cfg.beta * reg)


def optimality_residuals(R, rho, aset: AdmissibleSet, beta: float, grid, tau):
    """``(vi_residual, projection_residual)``.

    ``vi_residual`` is minus the smallest value of ``int (rho + beta R)(Rt - R)``
    over the box, attained cellwise at a vertex; ``projection_residual`` is
    ``|R - P(-rho/beta)| / max(|R|, 1)`` in the space-time L2 norm.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    R = np.asarray(R, dtype=float)
    g = np.asarray(rho) + beta * R
    lo = g * (aset.r_min - R)
    hi = g * (aset.r_max - R)
    vi = -tau * grid.cell_area * float(np.sum(np.minimum(np.minimum(lo, hi), 0.0)))
    if beta > 0:
        target = np.clip(-np.asarray(rho) / beta, aset.r_min, aset.r_max)
        nrm = lambda a: np.sqrt(tau * grid.cell_area * float(np.sum(a * a)))
        proj = nrm(R - target) / max(nrm(R), 1.0)
    else:
        proj = float("nan")
    return vi, proj


@dataclass
class OptimizeOptions:
    tol: float = 1e-4
    max_iter: int = 200
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 30
    allow_beta_zero: bool = False
    s0: float | None = None


@dataclass
class OptimizeReport:
    iterations: int = 0
    cost: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    projection_residual: list = field(default_factory=list)
    step_size: list = field(default_factory=list)
    vi_residual: float = float("nan")
    budget_violation: bool = False
    reason: str = ""

    def rows(self):
        """``(k, cost, grad_norm, projection_residual, step_size)`` per iterate."""
        steps = [float("nan")] + self.step_size
        return [
            (k, self.cost[k], self.grad_norm[k], self.projection_residual[k], steps[k])
            for k in range(len(self.cost))
        ]


class ReducedProblem:
    """``R -> (J(R), gradient)`` with the state and costate of the last evaluation cached."""

    def __init__(self, system: CHDSystem, phi0, S, cfg: CostConfig, T: float, tau: float):
        self.system, self.phi0, self.S, self.cfg, self.T, self.tau = system, phi0, S, cfg, T, tau

    def state(self, R) -> Trajectory:
        return run(self.system, self.phi0, SourceSchedule(self.S, R), self.T, self.tau)

    def value(self, R) -> float:
        return cost(self.system, self.state(R), R, self.cfg)

    def value_and_grad(self, R, traj=None):
        traj = self.state(R) if traj is None else traj
        adj = costate(self.system, traj, self.cfg)
        return cost(self.system, traj, R, self.cfg), reduced_gradient(adj, R, self.cfg.beta), traj, adj


def optimize(system: CHDSystem, phi0, S, aset: AdmissibleSet, cfg: CostConfig, T: float, tau: float,
             R0=None, opts: OptimizeOptions | None = None, callback=None):
    """Projected gradient with Armijo backtracking; returns ``(R, report)``."""
    opts = opts or OptimizeOptions()
    if cfg.beta <= 0 and not opts.allow_beta_zero:
        raise ValueError("optimize needs beta > 0 (set allow_beta_zero to override)")
    grid = system.grid
    prob = ReducedProblem(system, phi0, S, cfg, T, tau)
    N = int(round(T / tau))
    R = np.zeros((N,) + grid.shape) if R0 is None else np.asarray(R0, dtype=float)
    R = project_admissible(R, aset).R
    s0 = opts.s0 if opts.s0 is not None else (1.0 / cfg.beta if cfg.beta > 0 else 1.0)
    dA = tau * grid.cell_area
    rep = OptimizeReport()
    J, grad, traj, adj = prob.value_and_grad(R)
    rho = adj.rho_control
    for k in range(opts.max_iter + 1):
        vi, pr = optimality_residuals(R, rho, aset, cfg.beta, grid, tau)
        if cfg.beta == 0:
            pr = np.sqrt(dA * float(np.sum((R - project_admissible(R - s0 * grad, aset).R) ** 2)))
        rep.cost.append(J)
        rep.grad_norm.append(np.sqrt(dA * float(np.sum(grad * grad))))
        rep.projection_residual.append(pr)
        rep.vi_residual = vi
        rep.iterations = k
        if callback is not None:
            callback(k, R, J, grad)
        log.info("iter %d cost %.10e proj %.3e", k, J, pr)
        if pr <= opts.tol:
            rep.reason = "converged"
            break
        if k == opts.max_iter:
            rep.reason = "max_iter"
            break
        s = s0
        for _ in range(opts.max_backtracks):
            Rt = project_admissible(R - s * grad, aset).R
            traj_t = prob.state(Rt)
            Jt = cost(system, traj_t, Rt, cfg)
            if Jt <= J + opts.armijo_c * dA * float(np.sum(grad * (Rt - R))):
                break
            s *= opts.backtrack
        else:
            raise StallError(f"line search failed {opts.max_backtracks} times at iteration {k}")
        R = Rt
        rep.step_size.append(s)
        J, grad, traj, adj = prob.value_and_grad(R, traj_t)
        rho = adj.rho_control
    rep.budget_violation = project_admissible(R, aset, grid, tau).budget_violation
    return R, rep
