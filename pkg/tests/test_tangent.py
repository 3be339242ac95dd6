import numpy as np
import pytest

from chd_opt.grid import VectorField, divergence
from chd_opt.state import SourceSchedule, run, step
from chd_opt.tangent import TangentForcing, TangentSnapshot, ds_apply, tangent_level, tangent_step


def rand_faces(g, rng):
    return VectorField(rng.standard_normal((g.nx + 1, g.ny)), rng.standard_normal((g.nx, g.ny + 1))).zero_boundary()


def test_forcing_rejects_boundary_normals(small_problem):
    g = small_problem["system"].grid
    bad = VectorField(np.ones((g.nx + 1, g.ny)), np.zeros((g.nx, g.ny + 1)))
    with pytest.raises(ValueError):
        TangentForcing(f1=[bad])


def test_zero_in_zero_out(small_problem):
    p = small_problem
    sysm, tr = p["system"], p["traj"]
    zero = tangent_level(sysm, tr.snapshots[0], np.zeros(sysm.grid.shape))
    out = tangent_step(sysm, tr.snapshots[0], tr.snapshots[1], zero, None, p["tau"])
    assert np.abs(out.xi).max() == 0.0 and out.v.max_abs() == 0.0
    assert np.abs(ds_apply(sysm, tr, np.zeros_like(p["R"])).xi).max() == 0.0


def test_one_step_taylor(small_problem):
    p = small_problem
    sysm, tr, tau = p["system"], p["traj"], p["tau"]
    h = np.random.default_rng(3).standard_normal(sysm.grid.shape)
    s0 = tr.snapshots[0]
    base = step(sysm, s0, p["R"][0], tau, p["S"][1])
    zero = tangent_level(sysm, s0, np.zeros(sysm.grid.shape))
    xi = tangent_step(sysm, s0, base, zero, h, tau).xi
    rem = []
    for e in (1e-2, 5e-3, 2.5e-3):
        pert = step(sysm, s0, p["R"][0] + e * h, tau, p["S"][1])
        rem.append(np.abs(pert.phi - base.phi - e * xi).max())
    assert 3.4 <= rem[0] / rem[1] <= 4.6 and 3.4 <= rem[1] / rem[2] <= 4.6


def test_linearity(small_problem):
    p = small_problem
    rng = np.random.default_rng(4)
    h1, h2 = rng.standard_normal(p["R"].shape), rng.standard_normal(p["R"].shape)
    a = ds_apply(p["system"], p["traj"], h1).xi
    b = ds_apply(p["system"], p["traj"], h2).xi
    c = ds_apply(p["system"], p["traj"], h1 + h2).xi
    d = ds_apply(p["system"], p["traj"], -2.5 * h1).xi
    scale = np.abs(c).max()
    assert np.abs(a + b - c).max() <= 1e-10 * scale
    assert np.abs(d + 2.5 * a).max() <= 1e-10 * scale


def test_general_forcing_invariants(small_problem):
    p = small_problem
    g = p["system"].grid
    rng = np.random.default_rng(5)
    N = p["N"]
    f = TangentForcing([rand_faces(g, rng) for _ in range(N + 1)], rng.standard_normal((N,) + g.shape),
                       rng.standard_normal((N + 1,) + g.shape))
    tt = ds_apply(p["system"], p["traj"], forcing=f)
    for s in tt.snapshots:
        assert isinstance(s, TangentSnapshot)
        assert np.abs(divergence(g, s.v)).max() <= 1e-9 * max(s.v.max_abs(), 1.0) / g.hx
        assert abs(g.mean(s.q)) < 1e-12
    assert tt.xi.shape == (N + 1,) + g.shape


def test_trajectory_taylor(small_problem):
    p = small_problem
    sysm, tau, N = p["system"], p["tau"], p["N"]
    h = np.random.default_rng(6).standard_normal(p["R"].shape)
    xi = ds_apply(sysm, p["traj"], h).xi
    rem = []
    for e in (1e-2, 5e-3, 2.5e-3):
        tp = run(sysm, p["phi0"], SourceSchedule(p["S"], p["R"] + e * h), N * tau, tau)
        rem.append(np.sqrt(np.sum((tp.phi - p["traj"].phi - e * xi) ** 2)))
    assert all(3.4 <= rem[i] / rem[i + 1] <= 4.6 for i in range(2))
