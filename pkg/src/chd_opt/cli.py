"""``chd-opt <mode> --config <path> [--out <dir>] [--seed <n>]``.

Exit codes: 0 ok, 2 config error, 3 verification failure, 4 solver failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from chd_opt.adjoint import costate
from chd_opt.config import ParseError, RunConfig, ValidationError, parse_config
from chd_opt.control import OptimizeOptions, ReducedProblem, StallError, optimize
from chd_opt.darcy import MeanError
from chd_opt.grid import NonConvergence
from chd_opt.io import FieldDump, write_csv
from chd_opt.materials import DomainError
from chd_opt.second_order import dt_apply, hessian_quadratic, space_time_inner
from chd_opt.state import ConstraintError, NewtonFailure, diagnostics_rows, energy_identity_residual, run

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_SOLVER = 0, 2, 3, 4
MODES = ("simulate", "optimize", "grad-check", "hessian-check", "energy-audit")
SOLVER_ERRORS = (NonConvergence, NewtonFailure, DomainError, ConstraintError, StallError, MeanError)

log = logging.getLogger("chd_opt")


class VerificationFailure(Exception):
    pass


class Context:
    def __init__(self, cfg: RunConfig, out: Path, mode: str):
        self.cfg, self.out, self.mode = cfg, out, mode
        self.system = cfg.system()
        self.grid = self.system.grid
        self.rng = np.random.default_rng(cfg["seed"])

    def dump(self, name, data, time=0.0):
        FieldDump(name, np.asarray(data), time, (self.grid.lx, self.grid.ly)).write(self.out / f"{name}.dump")

    def summary(self, rows):
        write_csv(self.out / "summary.csv", [("key", "quantity"), ("value", "its value")], rows)

    def direction(self):
        N = self.cfg.steps
        return self.rng.standard_normal((N,) + self.grid.shape)


def _simulate(ctx: Context):
    cfg = ctx.cfg
    traj = run(ctx.system, cfg.phi0(), cfg.schedule(), cfg["time.T"], cfg["time.tau"])
    write_csv(ctx.out / "diagnostics.csv", [
        ("t", "time"),
        ("energy", "free energy"),
        ("mass", "mean of phi"),
        ("min_phi", "minimum of phi"),
        ("max_phi", "maximum of phi"),
        ("grad_mu_sq", "squared L2 norm of grad mu"),
        ("kinetic", "integral of nu(phi)|u|^2"),
    ], diagnostics_rows(ctx.system, traj))
    last = traj.snapshots[-1]
    ctx.dump("phi_final", last.phi, last.t)
    ctx.dump("mu_final", last.mu, last.t)
    ctx.dump("pressure_final", last.darcy.pressure, last.t)
    ctx.summary([("steps", traj.steps), ("min_sep_margin", min(s.sep_margin for s in traj.snapshots)),
                 ("config_hash", traj.config_hash)])
    return EXIT_OK


def _optimize(ctx: Context):
    cfg = ctx.cfg
    aset, ccfg = cfg.admissible(), cfg.cost_config()
    opts = OptimizeOptions(tol=cfg["optimize.tol"], max_iter=cfg["optimize.max_iter"])
    R, rep = optimize(ctx.system, cfg.phi0(), cfg.sources(), aset, ccfg, cfg["time.T"], cfg["time.tau"],
                      R0=cfg.control(), opts=opts)
    write_csv(ctx.out / "optimize.csv", [
        ("k", "iteration"),
        ("cost", "reduced cost"),
        ("grad_norm", "space-time L2 norm of rho + beta R"),
        ("projection_residual", "|R - P(-rho/beta)| / max(|R|, 1)"),
        ("step_size", "accepted step leading to this iterate"),
    ], rep.rows())
    ctx.dump("R_opt", R, cfg["time.T"])
    ctx.summary([("iterations", rep.iterations), ("reason", rep.reason),
                 ("final_cost", rep.cost[-1]), ("projection_residual", rep.projection_residual[-1]),
                 ("vi_residual", rep.vi_residual), ("budget_violation", rep.budget_violation)])
    if rep.reason != "converged":
        raise VerificationFailure(f"optimizer stopped: {rep.reason}")
    return EXIT_OK


def _grad_check(ctx: Context):
    cfg = ctx.cfg
    ccfg = cfg.cost_config()
    tau = cfg["time.tau"]
    prob = ReducedProblem(ctx.system, cfg.phi0(), cfg.sources(), ccfg, cfg["time.T"], tau)
    R = cfg.control()
    _, grad, _, _ = prob.value_and_grad(R)
    eps = cfg["check.fd_eps"]
    rows = []
    for k in range(cfg["check.directions"]):
        h = ctx.direction()
        ad = space_time_inner(ctx.grid, tau, grad, h)
        fd = (prob.value(R + eps * h) - prob.value(R - eps * h)) / (2 * eps)
        rows.append((k, ad, fd, abs(ad - fd) / max(abs(ad), abs(fd), 1e-300)))
    write_csv(ctx.out / "grad_check.csv", [
        ("direction", "index of the random direction"),
        ("adjoint", "adjoint directional derivative"),
        ("finite_difference", "central difference of the reduced cost"),
        ("rel_error", "relative discrepancy"),
    ], rows)
    worst = max(r[3] for r in rows)
    ctx.summary([("max_rel_error", worst), ("tolerance", cfg["check.tol"])])
    print(f"grad-check max relative error {worst:.3e}")
    if not worst <= cfg["check.tol"]:
        raise VerificationFailure(f"gradient error {worst:.3e} exceeds {cfg['check.tol']:.1e}")
    return EXIT_OK


def _hessian_check(ctx: Context):
    cfg = ctx.cfg
    ccfg = cfg.cost_config()
    T, tau = cfg["time.T"], cfg["time.tau"]
    prob = ReducedProblem(ctx.system, cfg.phi0(), cfg.sources(), ccfg, T, tau)
    R = cfg.control()
    traj = prob.state(R)
    adj = costate(ctx.system, traj, ccfg)
    sym_rows = []
    for k in range(cfg["check.directions"]):
        h1, h2 = ctx.direction(), ctx.direction()
        a = hessian_quadratic(ctx.system, traj, adj, h1, h2, ccfg)
        b = hessian_quadratic(ctx.system, traj, adj, h2, h1, ccfg)
        sym_rows.append((k, a, b, abs(a - b) / max(abs(a), abs(b), 1.0)))
    write_csv(ctx.out / "hessian_symmetry.csv", [
        ("pair", "index of the direction pair"),
        ("h12", "J''[h1, h2]"),
        ("h21", "J''[h2, h1]"),
        ("rel_gap", "|h12 - h21| / max(|h12|, |h21|, 1)"),
    ], sym_rows)
    h = ctx.direction()
    rt = dt_apply(ctx.system, traj, adj, h, ccfg).rho
    taylor_rows, prev = [], None
    for j in range(4):
        e = 1e-2 / 2**j
        rp = costate(ctx.system, prob.state(R + e * h), ccfg).rho
        r = float(np.sqrt(tau * ctx.grid.cell_area * np.sum((rp - adj.rho - e * rt) ** 2)))
        taylor_rows.append((e, r, r and prev / r if prev else float("nan")))
        prev = r
    write_csv(ctx.out / "hessian_taylor.csv", [
        ("eps", "perturbation size"),
        ("remainder", "L2 norm of rho(R + eps h) - rho(R) - eps rho~"),
        ("ratio", "previous remainder over this one"),
    ], taylor_rows)
    worst = max(r[3] for r in sym_rows)
    ratios = [r[2] for r in taylor_rows[1:]]
    ctx.summary([("max_symmetry_gap", worst), ("min_taylor_ratio", min(ratios)),
                 ("max_taylor_ratio", max(ratios))])
    print(f"hessian-check symmetry gap {worst:.3e}, Taylor ratios {', '.join(f'{q:.3f}' for q in ratios)}")
    if worst > 1e-6 or not all(3.2 <= q <= 4.8 for q in ratios):
        raise VerificationFailure("Hessian symmetry or Taylor ratio out of range")
    return EXIT_OK


def _energy_audit(ctx: Context):
    cfg = ctx.cfg
    T, tau = cfg["time.T"], cfg["time.tau"]
    traj = run(ctx.system, cfg.phi0(), cfg.schedule(), T, tau)
    res = energy_identity_residual(ctx.system, traj)
    half = RunConfig(dict(cfg.values, **{"time.tau": tau / 2}), cfg.source)
    traj2 = run(ctx.system, half.phi0(), half.schedule(), T, tau / 2)
    res2 = energy_identity_residual(ctx.system, traj2)
    rows = [(n + 1, traj.snapshots[n + 1].t, traj.snapshots[n + 1].energy, res[n]) for n in range(traj.steps)]
    write_csv(ctx.out / "energy_audit.csv", [
        ("step", "step index"),
        ("t", "time at the end of the step"),
        ("energy", "free energy"),
        ("residual", "defect of the discrete energy balance"),
    ], rows)
    ratio = float(np.abs(res).max() / np.abs(res2).max())
    E = np.array([s.energy for s in traj.snapshots])
    ctx.summary([("max_residual", float(np.abs(res).max())), ("max_residual_half_tau", float(np.abs(res2).max())),
                 ("halving_ratio", ratio), ("max_energy_increase", float(np.diff(E).max()))])
    print(f"energy-audit max residual {np.abs(res).max():.3e}, halving ratio {ratio:.3f}")
    return EXIT_OK


HANDLERS = {
    "simulate": _simulate,
    "optimize": _optimize,
    "grad-check": _grad_check,
    "hessian-check": _hessian_check,
    "energy-audit": _energy_audit,
}


def _error(out: Path | None, code: int, kind: str, exc: Exception) -> int:
    record = {"status": "error", "exit_code": code, "kind": kind, "type": type(exc).__name__,
              "message": str(exc)}
    if isinstance(exc, ValidationError):
        record["problems"] = exc.problems
    text = json.dumps(record, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None and out.is_dir():
        (out / "error.json").write_text(text + "\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chd-opt", description="Controlled Cahn-Hilliard-Darcy solver and optimizer")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", required=True, help="flat key = value configuration file")
    p.add_argument("--out", default="chd_out", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=None, help="overrides the seed key of the config")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.values["seed"] = args.seed
    except ParseError as exc:
        return _error(out, EXIT_CONFIG, "parse", exc)
    except ValidationError as exc:
        return _error(out, EXIT_CONFIG, "validation", exc)
    canon = cfg.canonical()
    (out / "run.txt").write_text(
        f"mode = {args.mode}\nconfig_sha256 = {hashlib.sha256(canon.encode()).hexdigest()}\n" + canon
    )
    stale = out / "error.json"
    if stale.exists():
        stale.unlink()
    try:
        ctx = Context(cfg, out, args.mode)
        return HANDLERS[args.mode](ctx)
    except VerificationFailure as exc:
        return _error(out, EXIT_VERIFY, "verification", exc)
    except SOLVER_ERRORS as exc:
        return _error(out, EXIT_SOLVER, "solver", exc)
    except ValidationError as exc:
        return _error(out, EXIT_CONFIG, "validation", exc)


if __name__ == "__main__":
    sys.exit(main())
