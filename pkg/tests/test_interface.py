import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kfbi import functions as fn
from kfbi.interface import (
    InterfaceSolution,
    Source,
    extract_boundary_value,
    extract_normal_derivative,
    solve_simple_interface,
)

from conftest import CIRCLE, discretization, order, source

U_IN, U_OUT = fn.exp_linear(), fn.sin_product()


def _manufactured(disc, kappa):
    S = disc.solver(kappa)
    m = disc.mesh
    a = U_IN(m.x, m.y) - U_OUT(m.x, m.y)
    b = U_IN.normal_derivative(m.x, m.y, m.nx, m.ny) - U_OUT.normal_derivative(m.x, m.y, m.nx, m.ny)
    X, Y = disc.grid.mesh()
    sol = solve_simple_interface(S, a, b, source(U_IN, 1.0, kappa), source(U_OUT, 1.0, kappa), U_OUT(X, Y))
    exact = np.where(disc.region > 0, U_IN(X, Y), U_OUT(X, Y))
    return S, sol, exact


def _polynomial_solution(S, values):
    nb = S.mesh.size
    return InterfaceSolution(values, np.zeros((nb, 15)), np.zeros(S.rhs_map.shape[1]), np.zeros(nb), np.zeros(nb))


def test_zero_jumps_match_plain_solve(circle_disc):
    disc = circle_disc[64]
    S = disc.solver(2.0)
    f = source(U_IN, 1.0, 2.0)
    sol = S.solve(f_in=f, f_out=f)
    X, Y = disc.grid.mesh()
    h = disc.grid.h
    plain = S.fast.solve(f(X, Y) + h * h / 12 * f.laplacian(X, Y, h))
    assert np.array_equal(sol.u, plain)
    assert not sol.pair_values.any()


def test_quartic_field_is_extracted_exactly(circle_disc):
    disc = circle_disc[64]
    S = disc.solver(0.0)
    X, Y = disc.grid.mesh()
    m = disc.mesh
    def q(x, y):
        return 1 + x - 2 * y + x * y + 0.5 * x**3 - x**2 * y**2 + 0.3 * y**4
    def q_n(x, y, nx, ny):
        qx = 1 + y + 1.5 * x**2 - 2 * x * y**2
        qy = -2 + x - 2 * x**2 * y + 1.2 * y**3
        return nx * qx + ny * qy
    sol = _polynomial_solution(S, q(X, Y))
    for side in ("interior", "exterior"):
        t = S.extract_one_sided(sol, side)
        assert np.abs(t.value - q(m.x, m.y)).max() < 1e-11
        assert np.abs(t.normal_derivative - q_n(m.x, m.y, m.nx, m.ny)).max() < 1e-9


def test_linear_and_constant_fields(circle_disc):
    disc = circle_disc[32]
    S = disc.solver(0.0)
    X, Y = disc.grid.mesh()
    t = S.extract(_polynomial_solution(S, X), "interior")
    assert np.abs(t.normal_derivative - disc.mesh.nx).max() < 1e-11
    t = S.extract(_polynomial_solution(S, np.full_like(X, 3.0)), "exterior")
    assert np.abs(t.normal_derivative).max() < 1e-12
    assert np.abs(t.value - 3.0).max() < 1e-12


def test_surface_point_on_a_node_returns_the_nodal_value():
    from kfbi.geometry import Circle, Geometry

    disc = discretization(Geometry([Circle((0.0, 0.0), 0.5)]), 32, 1.0)
    S = disc.solver(0.0)
    m = disc.mesh
    i = int(np.argmin(np.hypot(m.x - 0.5, m.y)))
    assert np.hypot(m.x[i] - 0.5, m.y[i]) < 1e-14
    X, Y = disc.grid.mesh()
    field = np.cos(2 * X) * np.exp(Y)
    sol = _polynomial_solution(S, field)
    node = disc.grid.nearest_node(0.5, 0.0)
    # the fit is least squares, so only the smooth-field fit residual remains
    assert abs(extract_boundary_value(S, sol, i, "interior") - field[node]) < 1e-6


def test_single_point_helpers_agree_with_batch(circle_disc):
    disc = circle_disc[32]
    S, sol, _ = _manufactured(disc, 0.0)
    for side in ("interior", "exterior"):
        t = S.extract_one_sided(sol, side)
        for i in (0, 5, disc.mesh.size - 1):
            assert extract_boundary_value(S, sol, i, side) == pytest.approx(t.value[i], abs=1e-14)
            assert extract_normal_derivative(S, sol, i, side) == pytest.approx(t.normal_derivative[i], abs=1e-12)


def test_unknown_side_rejected(circle_disc):
    S = circle_disc[32].solver(0.0)
    with pytest.raises(ValueError):
        S.extract(_polynomial_solution(S, np.zeros(circle_disc[32].grid.shape)), "inside")


@pytest.mark.parametrize("kappa", [0.0, 100.0])
def test_manufactured_interface_solution(kappa):
    errs, trace, flux = [], [], []
    for n in (64, 128, 256):
        disc = discretization(CIRCLE, n, 1.0)
        S, sol, exact = _manufactured(disc, kappa)
        errs.append(np.abs(sol.u - exact).max())
        m = disc.mesh
        t = S.extract(sol, "interior")
        trace.append(np.abs(t.value - U_IN(m.x, m.y)).max())
        flux.append(np.abs(t.normal_derivative - U_IN.normal_derivative(m.x, m.y, m.nx, m.ny)).max())
    assert order(errs[0], errs[2]) / 2 >= 3.7
    assert order(trace[0], trace[2]) / 2 >= 4.0
    assert order(flux[0], flux[2]) / 2 >= 3.5


def test_one_fast_solve_per_call(circle_disc):
    S = circle_disc[32].solver(0.0)
    symbol = S.fast.symbol
    before = S.fast.solves
    rng = np.random.default_rng(5)
    S.solve(rng.standard_normal(S.mesh.size), rng.standard_normal(S.mesh.size))
    S.solve(b=rng.standard_normal(S.mesh.size))
    assert S.fast.solves == before + 2
    assert S.fast.symbol is symbol


def test_source_without_laplacian_falls_back_to_differences():
    f = Source(lambda x, y: np.sin(x) * np.cos(y))
    x, y = np.array([0.3]), np.array([-0.2])
    assert f.laplacian(x, y, 1e-3) == pytest.approx(-2 * np.sin(0.3) * np.cos(-0.2), rel=1e-5)
    assert f.scaled(2.0)(x, y) == pytest.approx(2 * f(x, y))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), alpha=st.floats(-3, 3), beta=st.floats(-3, 3))
def test_solve_is_linear_in_the_jumps(circle_disc, seed, alpha, beta):
    S = circle_disc[32].solver(1.0)
    rng = np.random.default_rng(seed)
    nb = S.mesh.size
    a1, b1, a2, b2 = (rng.standard_normal(nb) for _ in range(4))
    u1 = S.solve(a1, b1).u
    u2 = S.solve(a2, b2).u
    u = S.solve(alpha * a1 + beta * a2, alpha * b1 + beta * b2).u
    scale = max(1.0, np.abs(alpha * u1).max(), np.abs(beta * u2).max())
    assert np.abs(u - alpha * u1 - beta * u2).max() <= 1e-10 * scale


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_jump_relations_hold_for_random_densities(circle_disc, seed):
    disc = circle_disc[64]
    S = disc.solver(0.0)
    rng = np.random.default_rng(seed)
    m = disc.mesh
    phi = fn.random_smooth(rng)(m.x, m.y)
    psi = fn.random_smooth(rng)(m.x, m.y)
    sol = S.solve(phi, psi)
    ti, te = S.extract_one_sided(sol, "interior"), S.extract_one_sided(sol, "exterior")
    scale = max(1.0, np.abs(phi).max(), np.abs(psi).max())
    assert np.abs(ti.value - te.value - phi).max() <= 1e-4 * scale
    assert np.abs(ti.normal_derivative - te.normal_derivative - psi).max() <= 1e-2 * scale
    # the combined traces carry the jump exactly
    ci, ce = S.extract(sol, "interior"), S.extract(sol, "exterior")
    assert np.allclose(ci.value - ce.value, phi, atol=1e-12 * scale)
    assert np.allclose(ci.normal_derivative - ce.normal_derivative, psi, atol=1e-12 * scale)
