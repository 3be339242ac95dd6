import numpy as np
import pytest

from chd_opt.darcy import (
    MeanError,
    darcy_project,
    face_mobility,
    kinetic_energy,
    korteweg_force,
    solve_pressure,
)
from chd_opt.grid import Grid2D, VectorField, divergence, face_inner, gradient
from chd_opt.kernels import varcoef_apply
from chd_opt.materials import ConstantViscosity, TanhViscosity
from conftest import mean_zero, smooth_field

ONE = ConstantViscosity(1.0)


def manufactured_errors(sizes):
    errs = []
    for n in sizes:
        g = Grid2D(n, n)
        x, y = g.centers
        exact = np.cos(np.pi * x) * np.cos(np.pi * y)
        S = 2 * np.pi**2 * exact
        S -= S.mean()
        sol = solve_pressure(g, np.zeros(g.shape), np.zeros(g.shape), S, ONE, tol=1e-12)
        errs.append(g.norm(sol.pressure - (exact - exact.mean())))
    return np.array(errs)


def test_manufactured_order():
    errs = manufactured_errors((16, 32, 64, 128))
    orders = np.log2(errs[:-1] / errs[1:])
    assert orders.min() >= 1.9, orders


def test_trivial_state():
    g = Grid2D(8, 8)
    phi = np.full(g.shape, 0.2)
    sol = solve_pressure(g, phi, np.random.default_rng(0).standard_normal(g.shape), None, TanhViscosity())
    assert np.abs(sol.pressure).max() == 0.0 and sol.velocity.max_abs() == 0.0


def test_constant_viscosity_poisson():
    g = Grid2D(32, 32)
    x, _ = g.centers
    S = np.cos(np.pi * x)
    S -= S.mean()
    sol = solve_pressure(g, np.zeros(g.shape), np.zeros(g.shape), S, ONE)
    u = sol.velocity
    np.testing.assert_allclose(u.ux, -gradient(g, sol.pressure).ux, atol=1e-14)
    assert np.abs(divergence(g, u) - S).max() <= 1e-10 * np.abs(S).max()


def test_random_state_operator_oracle():
    g = Grid2D(16, 16, 2 * np.pi, 2 * np.pi)
    rng = np.random.default_rng(1)
    phi = smooth_field(g, rng, 0.5)
    mu = rng.standard_normal(g.shape)
    S = mean_zero(rng, g.shape)
    visc = TanhViscosity()
    sol = solve_pressure(g, phi, mu, S, visc, tol=1e-12)
    k = face_mobility(g, phi, visc)
    rhs = S - divergence(g, k * korteweg_force(g, phi, mu))
    applied = varcoef_apply(k.ux, k.uy, sol.pressure, g.hx, g.hy)
    assert np.linalg.norm(applied - rhs) <= 1e-11 * np.linalg.norm(rhs)
    assert np.abs(divergence(g, sol.velocity) - S).max() <= 1e-10 * np.abs(rhs).max()
    assert abs(g.mean(sol.pressure)) < 1e-14
    assert sol.velocity.boundary_normal_max() == 0.0
    assert sol.report.converged


def test_mean_error():
    g = Grid2D(8, 8)
    with pytest.raises(MeanError):
        solve_pressure(g, np.zeros(g.shape), np.zeros(g.shape), np.ones(g.shape), ONE)


def test_projection_self_adjoint():
    g = Grid2D(16, 16, 2 * np.pi, 2 * np.pi)
    rng = np.random.default_rng(2)
    k = face_mobility(g, smooth_field(g, rng, 0.6), TanhViscosity())
    f1 = VectorField(rng.standard_normal((17, 16)), rng.standard_normal((16, 17))).zero_boundary()
    f2 = VectorField(rng.standard_normal((17, 16)), rng.standard_normal((16, 17))).zero_boundary()
    u1, _, _ = darcy_project(g, k, f1)
    u2, _, _ = darcy_project(g, k, f2)
    a, b = face_inner(g, u1, f2), face_inner(g, f1, u2)
    assert abs(a - b) <= 1e-11 * max(abs(a), 1.0)


def test_kinetic_energy_quadrature():
    g = Grid2D(8, 8, 2.0, 0.5)
    rng = np.random.default_rng(3)
    u = VectorField(rng.standard_normal((9, 8)), rng.standard_normal((8, 9))).zero_boundary()
    from chd_opt.darcy import DarcySolution

    sol = DarcySolution(np.zeros(g.shape), u, None)
    direct = sum(float(np.sum(c**2)) for c in (u.ux, u.uy)) * g.hx * g.hy
    assert kinetic_energy(g, sol, np.zeros(g.shape), ONE) == pytest.approx(direct, rel=1e-14)
    assert kinetic_energy(g, sol, np.zeros(g.shape), ConstantViscosity(2.0)) == pytest.approx(2 * direct)
    zero = DarcySolution(np.zeros(g.shape), VectorField.zeros(g), None)
    assert kinetic_energy(g, zero, np.zeros(g.shape), ONE) == 0.0


def test_single_face():
    g = Grid2D(4, 4)
    u = VectorField.zeros(g)
    u.ux[2, 1] = 1.0
    from chd_opt.darcy import DarcySolution

    e = kinetic_energy(g, DarcySolution(np.zeros(g.shape), u, None), np.zeros(g.shape), ConstantViscosity(2.0))
    assert e == pytest.approx(2 * g.cell_area)
