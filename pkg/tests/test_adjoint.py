import numpy as np
import pytest

from chd_opt.adjoint import AdjointForcing, adjoint_sweep, costate, reduced_gradient, trapezoid_weights
from chd_opt.control import CostConfig, ReducedProblem
from chd_opt.grid import VectorField, divergence, face_inner
from chd_opt.second_order import space_time_inner
from chd_opt.tangent import TangentForcing, ds_apply


def rand_faces(g, rng):
    return VectorField(rng.standard_normal((g.nx + 1, g.ny)), rng.standard_normal((g.nx, g.ny + 1))).zero_boundary()


def test_trapezoid_weights():
    np.testing.assert_array_equal(trapezoid_weights(3), [0.5, 1, 1, 0.5])


def test_forcing_rejects_boundary_normals():
    bad = VectorField(np.zeros((5, 4)), np.ones((4, 5)))
    with pytest.raises(ValueError):
        AdjointForcing(g1=[bad])


def test_zero_forcing(small_problem):
    adj = adjoint_sweep(small_problem["system"], small_problem["traj"], AdjointForcing())
    assert np.abs(adj.rho).max() == 0.0 and np.abs(adj.zeta).max() == 0.0


def test_full_duality(small_problem):
    p = small_problem
    g, tr, tau, N = p["system"].grid, p["traj"], p["tau"], p["N"]
    rng = np.random.default_rng(11)
    f1 = [rand_faces(g, rng) for _ in range(N + 1)]
    f2 = rng.standard_normal((N,) + g.shape)
    f3 = rng.standard_normal((N + 1,) + g.shape)
    g1 = [rand_faces(g, rng) for _ in range(N + 1)]
    g2 = rng.standard_normal((N + 1,) + g.shape)
    g3 = rng.standard_normal((N + 1,) + g.shape)
    g4 = rng.standard_normal(g.shape)
    tt = ds_apply(p["system"], tr, forcing=TangentForcing(f1, f2, f3))
    lhs = tau * sum(
        face_inner(g, g1[n], tt.snapshots[n].v) + g.inner(g2[n], tt.snapshots[n].xi)
        + g.inner(g3[n], tt.snapshots[n].eta) for n in range(N + 1)
    ) + g.inner(g4, tt.snapshots[N].xi)
    ad = adjoint_sweep(p["system"], tr, AdjointForcing(g1, g2, g3, g4))
    rhs = tau * sum(g.inner(f2[n], ad.snapshots[n + 1].rho) for n in range(N)) + tau * sum(
        face_inner(g, f1[n], ad.snapshots[n].w) + g.inner(f3[n], ad.snapshots[n].zeta) for n in range(N + 1)
    )
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)
    for s in ad.snapshots:
        assert np.abs(divergence(g, s.w)).max() <= 1e-9 * max(s.w.max_abs(), 1.0) / g.hx
        assert abs(g.mean(s.pi)) < 1e-12


def test_scaling(small_problem):
    p = small_problem
    g2 = np.random.default_rng(12).standard_normal((p["N"] + 1,) + p["system"].grid.shape)
    a = adjoint_sweep(p["system"], p["traj"], AdjointForcing(g2=g2)).rho
    b = adjoint_sweep(p["system"], p["traj"], AdjointForcing(g2=3.0 * g2)).rho
    assert np.abs(b - 3 * a).max() <= 1e-10 * np.abs(b).max()


def test_costate_vanishes_on_target(small_problem):
    p = small_problem
    tr = p["traj"]
    on_target = CostConfig(1.0, 1.0, 0.1, tr.phi[-1], tr.phi)
    assert np.abs(costate(p["system"], tr, on_target).rho).max() == 0.0
    no_tracking = CostConfig(0.0, 0.0, 1.0, np.zeros(tr.phi[0].shape), np.zeros(tr.phi[0].shape))
    adj = costate(p["system"], tr, no_tracking)
    np.testing.assert_array_equal(reduced_gradient(adj, p["R"], 1.0), p["R"])
    adj = costate(p["system"], tr, p["cfg"])
    np.testing.assert_array_equal(reduced_gradient(adj, p["R"], 0.0), adj.rho_control)
    with pytest.raises(ValueError):
        reduced_gradient(adj, p["R"], -1.0)


def test_gradient_against_central_differences(small_problem):
    p = small_problem
    prob = ReducedProblem(p["system"], p["phi0"], p["S"], p["cfg"], p["N"] * p["tau"], p["tau"])
    _, grad, _, _ = prob.value_and_grad(p["R"])
    rng = np.random.default_rng(13)
    for _ in range(3):
        h = rng.standard_normal(p["R"].shape)
        e = 1e-5
        fd = (prob.value(p["R"] + e * h) - prob.value(p["R"] - e * h)) / (2 * e)
        ad = space_time_inner(p["system"].grid, p["tau"], grad, h)
        assert abs(fd - ad) <= 1e-6 * abs(ad)
