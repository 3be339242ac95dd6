"""Flat ``section.key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Numbers accept a trailing
``pi`` factor (``2pi``).  Every key has a default; see :data:`KEYS`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from chd_opt.control import AdmissibleSet, CostConfig
from chd_opt.grid import Grid2D
from chd_opt.io import DumpError, read_dump
from chd_opt.materials import ConstantViscosity, PotentialParams, TanhViscosity
from chd_opt.state import CHDSystem, SolverOptions, SourceSchedule, run


class ParseError(ValueError):
    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line, self.key = line, key


class ValidationError(ValueError):
    def __init__(self, problems):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


def _number(text: str) -> float:
    t = text.strip().lower()
    if t.endswith("pi"):
        head = t[:-2].rstrip("*").strip()
        return (float(head) if head else 1.0) * math.pi
    return float(t)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def conv(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return conv


_PATH = "path"

# key -> (converter, default)
KEYS = {
    "grid.nx": (int, 32),
    "grid.ny": (int, 32),
    "grid.lx": (_number, 2 * math.pi),
    "grid.ly": (_number, 2 * math.pi),
    "time.T": (_number, 0.2),
    "time.tau": (_number, 0.01),
    "potential.theta": (_number, 1.0),
    "potential.theta0": (_number, 2.0),
    "potential.eps": (_number, 0.0),
    "potential.kappa": (_number, 0.5),
    "viscosity.model": (_choice("tanh", "constant"), "tanh"),
    "viscosity.a": (_number, -0.4),
    "viscosity.b": (_number, 3.0),
    "viscosity.c": (_number, 0.4),
    "viscosity.nu_lo": (_number, 0.5),
    "viscosity.nu_hi": (_number, 2.0),
    "viscosity.value": (_number, 1.0),
    "initial.profile": (_choice("cosine", "random", "constant", "file"), "cosine"),
    "initial.amplitude": (_number, 0.4),
    "initial.mean": (_number, 0.0),
    "initial.modes": (int, 1),
    "initial.path": (_PATH, None),
    "source.S": (_choice("zero", "cosine", "file"), "cosine"),
    "source.S_amplitude": (_number, 0.5),
    "source.S_path": (_PATH, None),
    "source.R": (_choice("zero", "cosine", "file"), "zero"),
    "source.R_amplitude": (_number, 0.6),
    "source.R_path": (_PATH, None),
    "cost.alpha1": (_number, 1.0),
    "cost.alpha2": (_number, 1.0),
    "cost.beta": (_number, 0.1),
    "cost.target": (_choice("reachable", "initial", "file"), "reachable"),
    "cost.target_amplitude": (_number, 0.6),
    "cost.phi_Omega_path": (_PATH, None),
    "cost.phi_Q_path": (_PATH, None),
    "admissible.r_min": (_number, -1.0),
    "admissible.r_max": (_number, 1.0),
    "admissible.delta0": (_number, 0.05),
    "admissible.r0": (_number, None),
    "admissible.r1": (_number, math.inf),
    "solver.newton_tol": (_number, 1e-11),
    "solver.newton_maxiter": (int, 50),
    "solver.cg_tol": (_number, 1e-12),
    "solver.cg_maxiter": (int, 0),
    "solver.separation_floor": (_number, 1e-8),
    "solver.monitor_mean": (_bool, False),
    "optimize.tol": (_number, 1e-4),
    "optimize.max_iter": (int, 100),
    "check.directions": (int, 5),
    "check.fd_eps": (_number, 1e-5),
    "check.tol": (_number, 1e-6),
    "seed": (int, 0),
}


@dataclass
class RunConfig:
    values: dict
    source: Path | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, key):
        return self.values[key]

    # builders -----------------------------------------------------------
    @property
    def grid(self) -> Grid2D:
        v = self.values
        return Grid2D(v["grid.nx"], v["grid.ny"], v["grid.lx"], v["grid.ly"])

    @property
    def steps(self) -> int:
        return int(round(self["time.T"] / self["time.tau"]))

    def system(self) -> CHDSystem:
        v = self.values
        pot = PotentialParams(v["potential.theta"], v["potential.theta0"], v["potential.eps"],
                              v["potential.kappa"])
        if v["viscosity.model"] == "tanh":
            visc = TanhViscosity(v["viscosity.a"], v["viscosity.b"], v["viscosity.c"],
                                 v["viscosity.nu_lo"], v["viscosity.nu_hi"])
        else:
            visc = ConstantViscosity(v["viscosity.value"])
        opts = SolverOptions(
            newton_tol=v["solver.newton_tol"],
            newton_maxiter=v["solver.newton_maxiter"],
            cg_tol=v["solver.cg_tol"],
            cg_maxiter=v["solver.cg_maxiter"] or None,
            separation_floor=v["solver.separation_floor"],
            delta0=v["admissible.delta0"] if v["solver.monitor_mean"] else None,
        )
        return CHDSystem(self.grid, pot, visc, opts)

    def _load(self, key, shapes):
        data = read_dump(self.values[key]).data
        if data.shape not in shapes:
            raise ValidationError([f"{key}: field shape {data.shape} not in {sorted(shapes)}"])
        return data

    def phi0(self) -> np.ndarray:
        v, g = self.values, self.grid
        x, y = g.centers
        prof, amp, mean = v["initial.profile"], v["initial.amplitude"], v["initial.mean"]
        if prof == "file":
            return self._load("initial.path", {g.shape})
        if prof == "constant":
            return np.full(g.shape, mean)
        if prof == "cosine":
            m = v["initial.modes"]
            return mean + amp * np.cos(2 * np.pi * m * x / g.lx) * np.cos(2 * np.pi * m * y / g.ly)
        rng = np.random.default_rng(v["seed"])
        f = np.zeros(g.shape)
        for k in range(5):
            for l in range(5):
                if k or l:
                    f += rng.standard_normal() * np.cos(np.pi * k * x / g.lx) * np.cos(np.pi * l * y / g.ly)
        f -= f.mean()
        return mean + amp * f / np.abs(f).max()

    def sources(self) -> np.ndarray:
        v, g, N = self.values, self.grid, self.steps
        x, y = g.centers
        if v["source.S"] == "zero":
            S = np.zeros((N + 1,) + g.shape)
        elif v["source.S"] == "cosine":
            s = v["source.S_amplitude"] * np.cos(4 * np.pi * x / g.lx) * np.cos(2 * np.pi * y / g.ly)
            S = np.broadcast_to(s - s.mean(), (N + 1,) + g.shape).copy()
        else:
            S = self._load("source.S_path", {g.shape, (N + 1,) + g.shape})
            S = np.broadcast_to(S, (N + 1,) + g.shape).copy()
            S -= S.mean(axis=(1, 2), keepdims=True)
        return S

    def _cosine_control(self, amp) -> np.ndarray:
        g, N, T, tau = self.grid, self.steps, self["time.T"], self["time.tau"]
        x, y = g.centers
        base = amp * np.sin(2 * np.pi * x / g.lx) * np.cos(4 * np.pi * y / g.ly)
        return np.stack([base * np.cos(np.pi * n * tau / T) for n in range(N)])

    def control(self) -> np.ndarray:
        v, g, N = self.values, self.grid, self.steps
        if v["source.R"] == "zero":
            return np.zeros((N,) + g.shape)
        if v["source.R"] == "cosine":
            return self._cosine_control(v["source.R_amplitude"])
        R = self._load("source.R_path", {g.shape, (N,) + g.shape})
        return np.broadcast_to(R, (N,) + g.shape).copy()

    def schedule(self) -> SourceSchedule:
        return SourceSchedule(self.sources(), self.control())

    def cost_config(self) -> CostConfig:
        if "cost" in self._cache:
            return self._cache["cost"]
        v, g, N = self.values, self.grid, self.steps
        phi0 = self.phi0()
        if v["cost.target"] == "reachable":
            ref = SourceSchedule(self.sources(), self._cosine_control(v["cost.target_amplitude"]))
            traj = run(self.system(), phi0, ref, self["time.T"], self["time.tau"])
            phi_Q, phi_O = traj.phi, traj.phi[-1]
        elif v["cost.target"] == "initial":
            phi_Q, phi_O = phi0, phi0
        else:
            phi_O = self._load("cost.phi_Omega_path", {g.shape})
            phi_Q = self._load("cost.phi_Q_path", {g.shape, (N + 1,) + g.shape})
        cfg = CostConfig(v["cost.alpha1"], v["cost.alpha2"], v["cost.beta"], phi_O, phi_Q)
        self._cache["cost"] = cfg
        return cfg

    def admissible(self) -> AdmissibleSet:
        v = self.values
        aset = AdmissibleSet.for_initial(self.grid, self.phi0(), v["admissible.r_min"],
                                         v["admissible.r_max"], v["admissible.delta0"],
                                         v["admissible.r1"])
        if v["admissible.r0"] is not None:
            aset.r0 = v["admissible.r0"]
        return aset

    def canonical(self) -> str:
        """Sorted ``key = value`` listing of every setting, defaults included."""
        return "".join(f"{k} = {self.values[k]!r}\n" for k in sorted(self.values))


def parse_text(text: str, source: Path | None = None) -> RunConfig:
    values = {k: d for k, (_, d) in KEYS.items()}
    seen = {}
    base = source.parent if source is not None else Path.cwd()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep:
            raise ParseError("expected 'key = value'", lineno)
        if key not in KEYS:
            raise ParseError("unknown key", lineno, key)
        if key in seen:
            raise ParseError(f"duplicate key (first set on line {seen[key]})", lineno, key)
        seen[key] = lineno
        conv = KEYS[key][0]
        if conv is _PATH:
            p = Path(value)
            p = p if p.is_absolute() else base / p
            if not p.is_file():
                raise ParseError(f"file not found: {value}", lineno, key)
            values[key] = p
            continue
        try:
            values[key] = conv(value)
        except ValueError as exc:
            raise ParseError(f"bad value {value!r} ({exc})", lineno, key) from None
    cfg = RunConfig(values, source)
    validate(cfg)
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config: {exc}") from None
    return parse_text(text, path)


def validate(cfg: RunConfig):
    """Re-run every module's construction checks and collect all failures."""
    v = cfg.values
    problems = []

    def attempt(label, fn):
        try:
            return fn()
        except (ValueError, DumpError) as exc:
            problems.append(f"{label}: {exc}")
            return None

    grid = attempt("grid", lambda: cfg.grid)
    T, tau = v["time.T"], v["time.tau"]
    if not (T > 0 and tau > 0):
        problems.append("time: T and tau must be positive")
    elif not math.isclose(round(T / tau) * tau, T, rel_tol=1e-12):
        problems.append("time: T must be an integer multiple of tau")
    system = attempt("potential/viscosity", cfg.system)
    for key, need in (("initial.path", "file"),):
        if v["initial.profile"] == need and v[key] is None:
            problems.append(f"{key} is required when initial.profile = file")
    for which in ("S", "R"):
        if v[f"source.{which}"] == "file" and v[f"source.{which}_path"] is None:
            problems.append(f"source.{which}_path is required when source.{which} = file")
    if v["cost.target"] == "file" and (v["cost.phi_Omega_path"] is None or v["cost.phi_Q_path"] is None):
        problems.append("cost.phi_Omega_path and cost.phi_Q_path are required when cost.target = file")
    if min(v["cost.alpha1"], v["cost.alpha2"], v["cost.beta"]) < 0:
        problems.append("cost: alpha1, alpha2, beta must be nonnegative")
    elif v["cost.alpha1"] == v["cost.alpha2"] == v["cost.beta"] == 0:
        problems.append("cost: alpha1, alpha2, beta cannot all vanish")
    if v["admissible.r_min"] > v["admissible.r_max"]:
        problems.append("admissible: r_min exceeds r_max")
    for key in ("check.directions", "optimize.max_iter", "solver.newton_maxiter"):
        if v[key] < 1:
            problems.append(f"{key} must be at least 1")
    for key in ("check.fd_eps", "check.tol", "optimize.tol", "solver.newton_tol", "solver.cg_tol"):
        if not v[key] > 0:
            problems.append(f"{key} must be positive")
    if grid is not None and not problems:
        phi0 = attempt("initial", cfg.phi0)
        if phi0 is not None:
            if system is not None and system.potential.singular and np.abs(phi0).max() >= 1:
                problems.append("initial: max|phi0| must stay below 1 for the singular potential")
            attempt("admissible", cfg.admissible)
        attempt("source", cfg.schedule)
    if problems:
        raise ValidationError(problems)
