import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chd_opt.adjoint import costate
from chd_opt.control import CostConfig, ReducedProblem
from chd_opt.second_order import (
    ACTIVE,
    AT_LOWER,
    AT_UPPER,
    FREE,
    activity_tolerance,
    critical_cone_project,
    dt_apply,
    hessian_quadratic,
    hessian_vector,
    space_time_inner,
    sufficiency_probe,
)
from chd_opt.state import SourceSchedule, run


@pytest.fixture(scope="module")
def base(small_problem):
    p = small_problem
    adj = costate(p["system"], p["traj"], p["cfg"])
    return p, adj


def test_zero_direction(base):
    p, adj = base
    rt = dt_apply(p["system"], p["traj"], adj, np.zeros_like(p["R"]), p["cfg"])
    assert np.abs(rt.rho).max() == 0.0
    assert hessian_quadratic(p["system"], p["traj"], adj, p["R"], np.zeros_like(p["R"]), p["cfg"]) == 0.0


def test_no_tracking_gives_beta(small_problem):
    p = small_problem
    cfg = CostConfig(0.0, 0.0, 0.7, np.zeros(p["phi0"].shape), np.zeros(p["phi0"].shape))
    adj = costate(p["system"], p["traj"], cfg)
    h = np.random.default_rng(1).standard_normal(p["R"].shape)
    assert np.abs(dt_apply(p["system"], p["traj"], adj, h, cfg).rho).max() == 0.0
    q = hessian_quadratic(p["system"], p["traj"], adj, h, h, cfg)
    assert q == pytest.approx(0.7 * space_time_inner(p["system"].grid, p["tau"], h, h), rel=1e-12)


def test_dt_taylor(base):
    p, adj = base
    sysm, tau, N = p["system"], p["tau"], p["N"]
    h = np.random.default_rng(2).standard_normal(p["R"].shape)
    rt = dt_apply(sysm, p["traj"], adj, h, p["cfg"]).rho
    rem = []
    for e in (1e-2, 5e-3, 2.5e-3):
        tp = run(sysm, p["phi0"], SourceSchedule(p["S"], p["R"] + e * h), N * tau, tau)
        rem.append(np.sqrt(np.sum((costate(sysm, tp, p["cfg"]).rho - adj.rho - e * rt) ** 2)))
    assert all(3.2 <= rem[i] / rem[i + 1] <= 4.8 for i in range(2))


def test_symmetry_and_linearity(base):
    p, adj = base
    rng = np.random.default_rng(3)
    h1, h2 = rng.standard_normal(p["R"].shape), rng.standard_normal(p["R"].shape)
    a = hessian_quadratic(p["system"], p["traj"], adj, h1, h2, p["cfg"])
    b = hessian_quadratic(p["system"], p["traj"], adj, h2, h1, p["cfg"])
    assert abs(a - b) <= 1e-6 * max(abs(a), 1.0)
    v1 = hessian_vector(p["system"], p["traj"], adj, h1, p["cfg"])
    v2 = hessian_vector(p["system"], p["traj"], adj, h2, p["cfg"])
    v12 = hessian_vector(p["system"], p["traj"], adj, h1 + h2, p["cfg"])
    assert np.abs(v1 + v2 - v12).max() <= 1e-10 * np.abs(v12).max()


def test_gradient_difference_consistency(base):
    p, adj = base
    prob = ReducedProblem(p["system"], p["phi0"], p["S"], p["cfg"], p["N"] * p["tau"], p["tau"])
    rng = np.random.default_rng(4)
    h1, h2 = rng.standard_normal(p["R"].shape), rng.standard_normal(p["R"].shape)
    exact = hessian_quadratic(p["system"], p["traj"], adj, h1, h2, p["cfg"])
    _, g0, _, _ = prob.value_and_grad(p["R"])
    errs = []
    for e in (1e-3, 5e-4, 2.5e-4):
        _, ge, _, _ = prob.value_and_grad(p["R"] + e * h2)
        errs.append(abs(space_time_inner(p["system"].grid, p["tau"], (ge - g0) / e, h1) - exact))
    assert all(1.6 <= errs[i] / errs[i + 1] <= 2.4 for i in range(2))


def brute_force_cone(h, R, rho, beta, lo, hi, tol):
    out = np.empty_like(h)
    cls = np.empty(h.shape, dtype=int)
    for idx in np.ndindex(h.shape):
        gval = rho[idx] + beta * R[idx]
        if abs(gval) > tol:
            out[idx], cls[idx] = 0.0, ACTIVE
        elif R[idx] <= lo:
            out[idx], cls[idx] = max(h[idx], 0.0), AT_LOWER
        elif R[idx] >= hi:
            out[idx], cls[idx] = min(h[idx], 0.0), AT_UPPER
        else:
            out[idx], cls[idx] = h[idx], FREE
    return out, cls


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_cone_matches_per_cell_oracle(seed):
    rng = np.random.default_rng(seed)
    shape = (3, 5, 4)
    R = rng.choice([-1.0, 1.0, 0.3, -0.2], size=shape)
    beta = 0.5
    rho = np.where(rng.random(shape) < 0.5, -beta * R, rng.standard_normal(shape))
    h = rng.standard_normal(shape)
    tol = activity_tolerance(rho + beta * R)
    cd = critical_cone_project(h, R, rho, beta, -1.0, 1.0)
    out, cls = brute_force_cone(h, R, rho, beta, -1.0, 1.0, tol)
    np.testing.assert_array_equal(cd.h, out)
    np.testing.assert_array_equal(cd.classes, cls)
    assert sum(cd.counts.values()) == h.size
    again = critical_cone_project(cd.h, R, rho, beta, -1.0, 1.0)
    assert sum(again.violations.values()) == 0


def test_cone_trivial_cases():
    rng = np.random.default_rng(5)
    R = 0.1 * rng.standard_normal((2, 4, 4))
    h = rng.standard_normal(R.shape)
    cd = critical_cone_project(h, R, -0.5 * R, 0.5, -1.0, 1.0)
    np.testing.assert_array_equal(cd.h, h)
    cd = critical_cone_project(h, R, np.full(R.shape, 3.0) - 0.5 * R, 0.5, -1.0, 1.0)
    assert cd.is_zero and cd.violations["active"] == h.size
    with pytest.raises(ValueError):
        critical_cone_project(h, R, R, 0.5, -1.0, 1.0, tol_active=0.0)


def test_sufficiency_probe_beta_only(small_problem):
    p = small_problem
    cfg = CostConfig(0.0, 0.0, 0.25, np.zeros(p["phi0"].shape), np.zeros(p["phi0"].shape))
    adj = costate(p["system"], p["traj"], cfg)
    rng = np.random.default_rng(6)
    dirs = [rng.standard_normal(p["R"].shape) for _ in range(2)] + [np.zeros(p["R"].shape)]
    rep = sufficiency_probe(p["system"], p["traj"], adj, dirs, cfg)
    assert rep.rejected == 1 and rep.positive
    assert all(abs(r - 0.25) <= 1e-10 for r in rep.ratios)


def test_sufficiency_at_optimizer_output():
    from chd_opt.control import AdmissibleSet, OptimizeOptions, optimize
    from conftest import make_system

    sysm = make_system(8)
    g = sysm.grid
    x, y = g.centers
    phi0 = 0.3 * np.cos(x) * np.cos(y)
    N, tau = 4, 0.01
    S = np.zeros((N + 1,) + g.shape)
    cfg = CostConfig(0.0, 0.05, 1.0, phi0, 0.2 * np.cos(2 * x))
    aset = AdmissibleSet.for_initial(g, phi0, -2e-4, 2e-4, 0.05)
    R, rep = optimize(sysm, phi0, S, aset, cfg, N * tau, tau, opts=OptimizeOptions(tol=1e-10))
    assert rep.reason == "converged"
    traj = run(sysm, phi0, SourceSchedule(S, R), N * tau, tau)
    adj = costate(sysm, traj, cfg)
    rng = np.random.default_rng(9)
    dirs = [critical_cone_project(rng.standard_normal(R.shape), R, adj.rho_control, cfg.beta, -2e-4, 2e-4)
            for _ in range(3)]
    counts = dirs[0].counts
    assert counts["active"] > 0 and counts["free"] > 0
    rep2 = sufficiency_probe(sysm, traj, adj, dirs, cfg)
    assert rep2.positive and rep2.min_ratio > 0
