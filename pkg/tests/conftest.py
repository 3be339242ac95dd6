import json
from pathlib import Path

import numpy as np
import pytest

from chd_opt.grid import Grid2D
from chd_opt.materials import PotentialParams, TanhViscosity
from chd_opt.state import CHDSystem

FROZEN = json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())


@pytest.fixture(scope="session")
def frozen():
    return FROZEN


def smooth_field(grid, rng, amp=0.4, modes=4, mean=0.0):
    """Random Neumann-compatible cosine series scaled to ``max|f - mean| = amp``."""
    x, y = grid.centers
    f = np.zeros(grid.shape)
    for k in range(modes):
        for l in range(modes):
            if k or l:
                f += rng.standard_normal() * np.cos(np.pi * k * x / grid.lx) * np.cos(np.pi * l * y / grid.ly)
    f -= f.mean()
    return mean + amp * f / np.abs(f).max()


def mean_zero(rng, shape, scale=0.5):
    a = scale * rng.standard_normal(shape)
    return a - a.mean(axis=(-2, -1), keepdims=True)


def make_system(n=16, eps=0.0, visc=None, L=2 * np.pi):
    return CHDSystem(Grid2D(n, n, L, L), PotentialParams(1.0, 2.0, eps), visc or TanhViscosity())


@pytest.fixture(scope="session")
def small_problem():
    """16^2 grid, 6 steps, random sources and control, singular potential."""
    from chd_opt.control import CostConfig
    from chd_opt.state import SourceSchedule, run

    system = make_system(16)
    g = system.grid
    rng = np.random.default_rng(7)
    x, y = g.centers
    phi0 = 0.3 * np.cos(x) * np.cos(y) + 0.2 * np.sin(x / 2)
    N, tau = 6, 0.01
    S = mean_zero(rng, (N + 1,) + g.shape)
    R = 0.5 * rng.standard_normal((N,) + g.shape)
    traj = run(system, phi0, SourceSchedule(S, R), N * tau, tau)
    cfg = CostConfig(1.0, 1.0, 0.1, 0.5 * np.cos(x), 0.3 * np.sin(y))
    return {"system": system, "phi0": phi0, "S": S, "R": R, "tau": tau, "N": N, "traj": traj, "cfg": cfg,
            "rng_seed": 7}


ACCEPTANCE_LINES = []


def record_criterion(cid, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {cid:>2}: {name} :: {detail}"
    ACCEPTANCE_LINES.append((cid, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
