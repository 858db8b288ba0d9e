import configparser
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from kfbi import cli
from kfbi.experiment import (
    TABLE_HEADER,
    ConfigError,
    GridResult,
    RunReport,
    bundled_configs,
    convergence_order,
    load_config,
    parse_config,
    read_field_dump,
    run_experiment,
    with_overrides,
    write_field_dump,
)

SMALL = """
[problem]
kind = {kind}
exact_in = {exact_in}
exact_out = {exact_out}

[geometry]
components = body

[component.body]
type = circle
center = 0.013, -0.021
radius = 0.6

[grid]
lower = -1, -1
upper = 1, 1
sizes = {sizes}

[solver]
tol = {tol}
max_iter = {max_iter}
"""


def _config(tmp_path, name="small", kind="dirichlet", exact_in="exp_sin", exact_out="zero", sizes="32, 64", tol="1e-10", max_iter="200"):
    path = tmp_path / f"{name}.ini"
    path.write_text(SMALL.format(kind=kind, exact_in=exact_in, exact_out=exact_out, sizes=sizes, tol=tol, max_iter=max_iter))
    return path


def _rows(*errors):
    return [GridResult(32 * 2**k, 0, 0, e, e, math.nan, math.nan, 0.0) for k, e in enumerate(errors)]


def test_order_examples():
    assert convergence_order(_rows(1.6e-4, 1e-5))["linf_interior"][0] == pytest.approx(4.0)
    table1 = convergence_order(_rows(1.31e-4, 3.69e-6, 1.03e-7))["linf_interior"]
    assert table1 == pytest.approx([5.15, 5.16], abs=0.01)
    assert convergence_order(_rows(2e-3, 2e-3))["linf_interior"] == [0.0]
    assert convergence_order(_rows(0.0, 0.0))["linf_interior"] == [None]
    assert convergence_order(_rows(1e-3, 1e-4))["linf_exterior"] == [None]
    with pytest.raises(ValueError):
        convergence_order(_rows(1e-3))


def test_bundled_configs_parse():
    names = bundled_configs()
    assert {"table1", "table2"} <= set(names)
    for name in names:
        cfg = load_config(name)
        assert cfg.geometry().n_components >= 1
    t2 = load_config("table2")
    assert t2.geometry().n_components == 9 and t2.sizes == (64, 128, 256)


@pytest.mark.parametrize(
    "edit",
    [
        lambda p: p.remove_section("grid"),
        lambda p: p.set("problem", "kind", "robin"),
        lambda p: p.set("problem", "exact_in", "no_such_function"),
        lambda p: p.set("grid", "sizes", "64, 32"),
        lambda p: p.set("grid", "sizes", "48"),
        lambda p: p.set("grid", "upper", "1, 2"),
        lambda p: p.set("component.body", "type", "hexagon"),
        lambda p: p.set("solver", "tol", "-1"),
        lambda p: p.set("geometry", "components", ""),
    ],
)
def test_bad_configs_rejected(tmp_path, edit):
    parser = configparser.ConfigParser()
    parser.read(_config(tmp_path))
    edit(parser)
    with pytest.raises(ConfigError):
        cfg = parse_config(parser)
        cfg.geometry()


def test_zero_solution_gives_zero_errors(tmp_path):
    cfg = load_config(_config(tmp_path, exact_in="zero", sizes="32"))
    report = run_experiment(cfg)
    assert report.ok
    (row,) = report.rows
    assert row.iterations <= 1 and row.linf_interior == 0.0 and row.l2_interior == 0.0


def test_run_writes_artifacts_and_is_deterministic(tmp_path):
    cfg = load_config(_config(tmp_path, sizes="64, 128"))
    one = run_experiment(cfg, tmp_path / "a")
    two = run_experiment(cfg, tmp_path / "b")
    assert one.ok and two.ok
    strip = lambda text: [line.rsplit(",", 1)[0] for line in text.splitlines()]
    a = (tmp_path / "a" / "errors.csv").read_text()
    assert strip(a) == strip((tmp_path / "b" / "errors.csv").read_text())
    assert a.splitlines()[0] == ",".join(TABLE_HEADER)
    log = (tmp_path / "a" / "run.log").read_text()
    assert "residuals" in log and "order linf_interior" in log and "status ok" in log
    lo, hi, n, values = read_field_dump(tmp_path / "a" / "field_N128.txt")
    assert (lo, hi, n, values.shape) == ((-1.0, -1.0), (1.0, 1.0), 128, (129, 129))
    # fourth order or better on this smooth problem
    assert convergence_order(one)["linf_interior"][0] >= 3.5


def test_non_convergence_stops_the_sweep(tmp_path):
    cfg = load_config(_config(tmp_path, tol="1e-14", max_iter="2"))
    report = run_experiment(cfg, tmp_path / "out")
    assert not report.ok and report.failure_kind == "convergence" and report.rows == []
    assert "failed" in (tmp_path / "out" / "run.log").read_text()


def test_overrides():
    cfg = load_config("table1")
    assert with_overrides(cfg) is cfg
    new = with_overrides(cfg, tol=1e-8, sizes=(32,))
    assert new.tol == 1e-8 and new.sizes == (32,) and cfg.sizes == (64, 128, 256)


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(n=st.sampled_from([8, 16]), data=st.data())
def test_field_dump_round_trip(tmp_path, n, data):
    values = data.draw(arrays(np.float64, (n + 1, n + 1), elements=st.floats(allow_nan=False, allow_infinity=False)))
    path = tmp_path / "dump.txt"
    write_field_dump(path, (-1.7, -1.7), (1.7, 1.7), n, values)
    lo, hi, m, back = read_field_dump(path)
    assert (lo, hi, m) == ((-1.7, -1.7), (1.7, 1.7), n)
    assert np.array_equal(back, values)


# -- command line -------------------------------------------------------------


def test_cli_solve(tmp_path, capsys):
    code = cli.main(["solve", str(_config(tmp_path)), "--out", str(tmp_path / "run"), "--grids", "32,64", "--no-fields"])
    out = capsys.readouterr().out
    assert code == cli.EXIT_OK
    assert out.startswith(",".join(TABLE_HEADER)) and "order linf_interior" in out
    assert (tmp_path / "run" / "errors.csv").exists() and not list((tmp_path / "run").glob("field_*"))


def test_cli_lists_configs(capsys):
    assert cli.main(["configs"]) == cli.EXIT_OK
    assert "table1" in capsys.readouterr().out.split()


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["solve", str(tmp_path / "missing.ini")]) == cli.EXIT_CONFIG
    bad = _config(tmp_path, name="bad", kind="robin")
    assert cli.main(["solve", str(bad)]) == cli.EXIT_CONFIG
    slow = _config(tmp_path, name="slow", max_iter="2", tol="1e-14", sizes="32")
    assert cli.main(["solve", str(slow), "--out", str(tmp_path / "slow")]) == cli.EXIT_NO_CONVERGENCE
    assert "failed" in capsys.readouterr().err


def test_cli_rejects_bad_grid_list():
    with pytest.raises(SystemExit):
        cli.main(["solve", "table1", "--grids", "a,b"])
