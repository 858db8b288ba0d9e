"""End-to-end acceptance checks, one test per criterion.

Each test records a ``PASS``/``FAIL`` line with the measured values; the
lines are printed in the terminal summary (see ``conftest.py``).
"""
import numpy as np
import pytest

from kfbi import functions as fn
from kfbi.bie import FormulationSpec, solve
from kfbi.correction import CollocationSet, rhs_corrections, select_collocation_points, collocation_matrix
from kfbi.experiment import convergence_order, load_config, run_experiment
from kfbi.fast_solver import CompactStencil, apply_stencil, compact_rhs, solve_compact
from kfbi.geometry import Circle, Geometry
from kfbi.grid import build_grid
from kfbi.interface import InterfaceSolution

from conftest import CIRCLE, ELLIPSE, discretization, order, source
from oracles import dense_solve

RESULTS: list[str] = []


def record(criterion: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion} ({title}): {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _fmt(values, pattern="{:.3g}"):
    return "[" + ", ".join("-" if v is None else pattern.format(v) for v in values) + "]"


def test_criterion_1_dirichlet_ellipse_table():
    reference = (1.31e-4, 3.69e-6, 1.03e-7)
    report = run_experiment(load_config("table1"))
    assert report.ok, report.failure
    linf = [r.linf_interior for r in report.rows]
    iters = [r.iterations for r in report.rows]
    orders = convergence_order(report)["linf_interior"]
    ratios = [e / ref for e, ref in zip(linf, reference)]
    ok = all(1 / 5 <= q <= 5 for q in ratios) and all(o >= 4.0 for o in orders) and max(iters) <= 15
    record(1, "Dirichlet BVP on the ellipse", ok, f"Linf={_fmt(linf)} ratio-to-reference={_fmt(ratios, '{:.2f}')} orders={_fmt(orders, '{:.2f}')} iterations={iters}")


def test_criterion_2_single_density_star_and_circles():
    ref_in, ref_out = (5.21e-5, 4.65e-7, 3.14e-9), (3.94e-5, 5.73e-7, 3.19e-9)
    report = run_experiment(load_config("table2"))
    assert report.ok, report.failure
    rows = report.rows
    e_in = [r.linf_interior for r in rows]
    e_out = [r.linf_exterior for r in rows]
    iters = [r.iterations for r in rows]
    ratios = [e / r for e, r in zip(e_in + e_out, ref_in + ref_out)]
    n_b = rows[0].n_b
    ok = (
        all(1 / 10 <= q <= 10 for q in ratios)
        and iters[0] <= 35
        and max(iters[1:]) <= 25
        and abs(n_b - 392) <= 0.05 * 392
    )
    record(
        2, "single-density interface, eight circles and a star", ok,
        f"Linf interior={_fmt(e_in)} exterior={_fmt(e_out)} max ratio={max(max(ratios), 1 / min(ratios)):.2f} iterations={iters} Nb(64)={n_b}",
    )


def test_criterion_3_fast_solver_against_dense():
    grid = build_grid((0, 0), (1, 1), 16)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for kappa in (0.0, 10.0):
        for _ in range(5):
            F = rng.standard_normal(grid.shape)
            ref = dense_solve(F, grid.h, kappa)
            worst = max(worst, np.abs(solve_compact(F, kappa, grid) - ref).max() / np.abs(ref).max())
    record(3, "fast solver vs dense solve", worst <= 1e-11, f"max relative error={worst:.2e}")


def _truncation_residuals(n):
    u_in, u_out = fn.exp_linear(), fn.sin_product()
    disc = discretization(CIRCLE, n, 1.0)
    grid, cls = disc.grid, disc.classification
    X, Y = grid.mesh()
    h = grid.h
    inside = cls.region > 0
    u = np.where(inside, u_in(X, Y), u_out(X, Y))
    f_in, f_out = source(u_in), source(u_out)
    F = np.where(inside, compact_rhs(f_in(X, Y), f_in.laplacian(X, Y, h), h), compact_rhs(f_out(X, Y), f_out.laplacian(X, Y, h), h))
    stencil = CompactStencil(h)

    def exact_correction(Q, comp):
        x, y = grid.node(*grid.unflat(Q))
        return u_in(x, y) - u_out(x, y)

    resid = np.abs(apply_stencil(u, stencil) - F - rhs_corrections(cls, exact_correction, stencil))
    inner = np.zeros(grid.shape, dtype=bool)
    inner[1:-1, 1:-1] = True
    return resid[inner & cls.irregular].max(), resid[inner & ~cls.irregular].max()


def test_criterion_4_corrected_truncation_error():
    r32, r128 = _truncation_residuals(32), _truncation_residuals(128)
    o_irr, o_reg = order(r32[0], r128[0]) / 2, order(r32[1], r128[1]) / 2
    record(
        4, "corrected scheme truncation", o_irr >= 3.0 and o_reg >= 4.0,
        f"irregular residual {r32[0]:.2e}->{r128[0]:.2e} order {o_irr:.2f}; regular {r32[1]:.2e}->{r128[1]:.2e} order {o_reg:.2f}",
    )


def test_criterion_5_collocation_conditioning():
    medians, worst, shapes_ok = [], 0.0, True
    for n in (64, 256):
        disc = discretization(ELLIPSE, n)
        cs = CollocationSet(disc.mesh, disc.grid)
        for i in range(disc.mesh.size):
            shapes_ok &= collocation_matrix(i, cs.points[i], disc.mesh, disc.grid, 0.0).shape == (15, 15)
        worst = max(worst, cs.cond.max())
        medians.append(np.median(cs.cond))
    change = max(medians) / min(medians)
    record(
        5, "collocation matrices on the ellipse", bool(shapes_ok) and worst <= 1e5 and change < 2.0,
        f"15x15={bool(shapes_ok)} max cond={worst:.3g} median cond={_fmt(medians)} median change={change:.2f}x",
    )


def test_criterion_6_jump_relations():
    k_const = 1e3
    rng = np.random.default_rng(3)
    phi_f, psi_f = fn.random_smooth(rng), fn.random_smooth(rng)
    value_err, flux_err, hs = [], [], []
    for n in (64, 128):
        disc = discretization(CIRCLE, n, 1.0)
        S, m = disc.solver(0.0), disc.mesh
        phi, psi = phi_f(m.x, m.y), psi_f(m.x, m.y)
        sol = S.solve(a=phi)
        value_err.append(np.abs(S.extract_one_sided(sol, "interior").value - S.extract_one_sided(sol, "exterior").value - phi).max())
        sol = S.solve(b=psi)
        ti, te = S.extract_one_sided(sol, "interior"), S.extract_one_sided(sol, "exterior")
        flux_err.append(np.abs(ti.normal_derivative - te.normal_derivative - psi).max())
        hs.append(disc.grid.h)
    o_val, o_flux = order(*value_err), order(*flux_err)
    bound = all(e <= k_const * h**5 for e, h in zip(value_err, hs))
    record(
        6, "double- and single-layer jump relations", bound and o_val >= 4.5 and o_flux >= 3.5,
        f"value jump error={_fmt(value_err)} (K={k_const:g}, max e/h^5={max(e / h**5 for e, h in zip(value_err, hs)):.0f}) order {o_val:.2f}; flux jump error={_fmt(flux_err)} order {o_flux:.2f}",
    )


def test_criterion_7_zero_jump_reduction():
    disc = discretization(CIRCLE, 64, 1.0)
    S, m = disc.solver(0.0), disc.mesh
    X, Y = disc.grid.mesh()
    f = source(fn.exp_sin())
    h = disc.grid.h
    with_interface = S.solve(np.zeros(m.size), np.zeros(m.size), f, f).u
    plain = solve_compact(compact_rhs(f(X, Y), f.laplacian(X, Y, h), h), 0.0, disc.grid)
    bitwise = np.array_equal(with_interface, plain)

    def quartic(x, y):
        return 0.7 - x + 0.4 * y + x * x * y - 0.3 * y**3 + x**4 - 0.5 * x * y**3

    nb = m.size
    field = InterfaceSolution(quartic(X, Y), np.zeros((nb, 15)), np.zeros(S.rhs_map.shape[1]), np.zeros(nb), np.zeros(nb))
    exact = quartic(m.x, m.y)
    gap = max(np.abs(S.extract(field, side).value - exact).max() for side in ("interior", "exterior"))
    record(7, "zero-jump reduction", bitwise and gap <= 1e-11, f"bitwise identical={bitwise} extraction vs interpolant={gap:.2e}")


def test_criterion_8_neumann_nullspace():
    report = run_experiment(load_config("neumann"))
    assert report.ok, report.failure
    orders = convergence_order(report)["linf_interior"]
    linf = [r.linf_interior for r in report.rows]
    iters = [r.iterations for r in report.rows]
    record(8, "pure Neumann problem", all(o >= 3.5 for o in orders), f"Linf={_fmt(linf)} orders={_fmt(orders, '{:.2f}')} iterations={iters}")


def test_criterion_9_double_crossings():
    u_in, u_out = fn.exp_linear(), fn.sin_product()
    errs, doubles, iters = [], [], []
    for n in (64, 128, 256):
        h, r = 2.4 / n, 0.45
        gap = 0.3 * h
        shift, y0 = 0.0113, 0.0371
        geo = Geometry([Circle((-r - gap / 2 + shift, y0), r), Circle((r + gap / 2 + shift, y0), r)])
        disc = discretization(geo, n)
        doubles.append(sum(1 for recs in disc.classification.cuts.values() if len(recs) == 2))
        spec = FormulationSpec(
            "interface_single_density", 1.0, 0.0, 3.0, 0.0, f_in=source(u_in), f_out=source(u_out, 3.0), box_data=u_out,
            jump_value=lambda x, y, nx, ny: u_in(x, y) - u_out(x, y),
            jump_flux=lambda x, y, nx, ny: u_in.normal_derivative(x, y, nx, ny) - 3.0 * u_out.normal_derivative(x, y, nx, ny),
        )
        sol = solve(spec, disc)
        X, Y = disc.grid.mesh()
        errs.append(np.abs(sol.u - np.where(disc.region > 0, u_in(X, Y), u_out(X, Y))).max())
        iters.append(sol.gmres.iterations)
    orders = [order(a, b) for a, b in zip(errs, errs[1:])]
    record(
        9, "circles a fraction of a cell apart", min(doubles) > 0 and min(orders) >= 3.0,
        f"double-crossing segments={doubles} Linf={_fmt(errs)} orders={_fmt(orders, '{:.2f}')} iterations={iters}",
    )
