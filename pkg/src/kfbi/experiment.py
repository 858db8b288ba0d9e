"""Manufactured-solution convergence sweeps driven by INI configs.

A config names the formulation, the geometry, the box, the grid sizes, the
coefficients and the exact solution (by registry name, see
:mod:`kfbi.functions`). All boundary, jump and source data are derived from
the exact solution, so every run reports true errors.

Example::

    [problem]
    kind = dirichlet
    exact_in = exp_sin

    [geometry]
    components = body

    [component.body]
    type = ellipse
    a = 1.0
    b = 0.5
    theta_deg = -30

    [grid]
    lower = -1.2, -1.2
    upper = 1.2, 1.2
    sizes = 64, 128, 256
"""
from __future__ import annotations

import configparser
import logging
import math
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import functions
from .bie import KINDS, ConvergenceError, Discretization, FormulationSpec, solve
from .geometry import Circle, Ellipse, Geometry, LevelSet, Star
from .grid import build_grid
from .interface import Source

TABLE_HEADER = ("N", "Nb", "iters", "l2_interior", "linf_interior", "l2_exterior", "linf_exterior", "seconds")
NORMS = ("l2_interior", "linf_interior", "l2_exterior", "linf_exterior")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ComponentSpec:
    """One entry of ``[geometry] components``; ``type`` is a key of ``SHAPES``."""

    name: str
    type: str
    params: dict[str, str]


@dataclass(frozen=True)
class RunConfig:
    kind: str
    components: tuple[ComponentSpec, ...]
    lower: tuple[float, float]
    upper: tuple[float, float]
    sizes: tuple[int, ...]
    exact_in: str
    exact_out: str = "zero"
    sigma_in: float = 1.0
    kappa_in: float = 0.0
    sigma_out: float = 1.0
    kappa_out: float = 0.0
    tol: float = 1e-10
    max_iter: int = 200
    output: Path | None = None
    name: str = "run"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if not self.sizes:
            raise ConfigError("grid sizes must not be empty")
        for n in self.sizes:
            if n < 4 or n & (n - 1):
                raise ConfigError(f"grid size {n} is not a power of two >= 4")
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ConfigError("grid sizes must be strictly increasing")
        if not (self.upper[0] - self.lower[0] > 0 and np.isclose(self.upper[0] - self.lower[0], self.upper[1] - self.lower[1])):
            raise ConfigError("the box must be a non-degenerate square")
        for name in (self.exact_in, self.exact_out):
            try:
                functions.lookup(name)
            except KeyError as exc:
                raise ConfigError(str(exc.args[0])) from None
        if self.tol <= 0 or self.max_iter < 1:
            raise ConfigError("tol must be positive and max_iter at least 1")

    def geometry(self) -> Geometry:
        parts: list[LevelSet] = []
        for comp in self.components:
            parts.extend(build_shapes(comp))
        return Geometry(parts)


# -- geometry registry --------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _angle(p: dict[str, str], key: str) -> float:
    if f"{key}_deg" in p:
        return math.radians(float(p[f"{key}_deg"]))
    return float(p.get(key, 0.0))


def _ellipse(p):
    return [Ellipse(_floats(p.get("center", "0 0")), float(p.get("a", 1.0)), float(p.get("b", 0.5)), _angle(p, "theta"))]


def _circle(p):
    return [Circle(_floats(p.get("center", "0 0")), float(p["radius"]))]


def _circle_ring(p):
    """``count`` circles of radius ``radius`` centred on a ring, the m-th at angle ``2 pi m / count``."""
    count = int(p.get("count", 8))
    ring = float(p.get("ring_radius", 1.0))
    cx, cy = _floats(p.get("center", "0 0"))
    r = float(p["radius"])
    return [Circle((cx + ring * math.cos(2 * math.pi * m / count), cy + ring * math.sin(2 * math.pi * m / count)), r) for m in range(1, count + 1)]


def _star(p):
    return [
        Star(
            _floats(p.get("center", "0 0")),
            float(p.get("a", 0.514)),
            float(p.get("b", 0.514)),
            float(p.get("eps", 0.2)),
            int(p.get("m", 5)),
        )
    ]


SHAPES = {"ellipse": _ellipse, "circle": _circle, "circle_ring": _circle_ring, "star": _star}


def build_shapes(comp: ComponentSpec) -> list[LevelSet]:
    try:
        make = SHAPES[comp.type]
    except KeyError:
        raise ConfigError(f"component {comp.name!r}: unknown type {comp.type!r}; known: {sorted(SHAPES)}") from None
    try:
        return make(comp.params)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"component {comp.name!r}: bad parameters ({exc})") from None


# -- config loading -----------------------------------------------------------


def bundled_configs() -> list[str]:
    root = resources.files("kfbi") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def resolve_config_path(name_or_path: str | Path) -> Path:
    """A filesystem path, or the name of a bundled config such as ``table1``."""
    path = Path(name_or_path)
    if path.exists():
        return path
    bundled = resources.files("kfbi") / "configs" / f"{name_or_path}.ini"
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"no config file {str(name_or_path)!r} and no bundled config of that name; bundled: {bundled_configs()}")


def load_config(name_or_path: str | Path) -> RunConfig:
    path = resolve_config_path(name_or_path)
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(parser, default_name=path.stem)


def parse_config(parser: configparser.ConfigParser, default_name: str = "run") -> RunConfig:
    for section in ("problem", "geometry", "grid"):
        if not parser.has_section(section):
            raise ConfigError(f"missing section [{section}]")
    prob, grid = parser["problem"], parser["grid"]
    names = [n.strip() for n in parser["geometry"].get("components", "").split(",") if n.strip()]
    if not names:
        raise ConfigError("[geometry] needs a components list")
    comps = []
    for n in names:
        sec = f"component.{n}"
        if not parser.has_section(sec):
            raise ConfigError(f"missing section [{sec}]")
        params = dict(parser[sec])
        comps.append(ComponentSpec(n, params.pop("type", n), params))
    solver = parser["solver"] if parser.has_section("solver") else {}
    out = parser["output"].get("directory") if parser.has_section("output") else None
    try:
        lower, upper = _floats(grid.get("lower", "-1 -1")), _floats(grid.get("upper", "1 1"))
        sizes = tuple(int(v) for v in _floats(grid["sizes"]))
        return RunConfig(
            kind=prob.get("kind", "dirichlet"),
            components=tuple(comps),
            lower=(lower[0], lower[1]),
            upper=(upper[0], upper[1]),
            sizes=sizes,
            exact_in=prob.get("exact_in", "zero"),
            exact_out=prob.get("exact_out", "zero"),
            sigma_in=float(prob.get("sigma_in", 1.0)),
            kappa_in=float(prob.get("kappa_in", 0.0)),
            sigma_out=float(prob.get("sigma_out", 1.0)),
            kappa_out=float(prob.get("kappa_out", 0.0)),
            tol=float(solver.get("tol", 1e-10)),
            max_iter=int(solver.get("max_iter", 200)),
            output=Path(out) if out else None,
            name=prob.get("name", default_name),
        )
    except (KeyError, ValueError, IndexError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from None


# -- problem data -------------------------------------------------------------


def _source(u: functions.ExpSum, sigma: float, kappa: float) -> Source:
    """``f = sigma Lap u - kappa u`` with its exact Laplacian."""
    return Source(
        lambda x, y: sigma * u.laplacian(x, y) - kappa * u(x, y),
        lambda x, y: sigma * u.bilaplacian(x, y) - kappa * u.laplacian(x, y),
    )


def formulation(cfg: RunConfig) -> FormulationSpec:
    ui, uo = functions.lookup(cfg.exact_in), functions.lookup(cfg.exact_out)
    common = dict(sigma_in=cfg.sigma_in, kappa_in=cfg.kappa_in, sigma_out=cfg.sigma_out, kappa_out=cfg.kappa_out)
    if cfg.kind == "dirichlet":
        return FormulationSpec(cfg.kind, **common, f_in=_source(ui, cfg.sigma_in, cfg.kappa_in), boundary_data=lambda x, y, nx, ny: ui(x, y))
    if cfg.kind == "neumann":
        s = cfg.sigma_in
        return FormulationSpec(
            cfg.kind, **common, f_in=_source(ui, s, cfg.kappa_in), boundary_data=lambda x, y, nx, ny: s * ui.normal_derivative(x, y, nx, ny)
        )
    si, so = cfg.sigma_in, cfg.sigma_out
    return FormulationSpec(
        cfg.kind,
        **common,
        f_in=_source(ui, si, cfg.kappa_in),
        f_out=_source(uo, so, cfg.kappa_out),
        jump_value=lambda x, y, nx, ny: ui(x, y) - uo(x, y),
        jump_flux=lambda x, y, nx, ny: si * ui.normal_derivative(x, y, nx, ny) - so * uo.normal_derivative(x, y, nx, ny),
        box_data=uo,
    )


# -- reports ------------------------------------------------------------------


@dataclass
class GridResult:
    n: int
    n_b: int
    iterations: int
    l2_interior: float
    linf_interior: float
    l2_exterior: float
    linf_exterior: float
    seconds: float
    residuals: list[float] = field(default_factory=list)

    def row(self) -> list[str]:
        vals = [self.l2_interior, self.linf_interior, self.l2_exterior, self.linf_exterior, self.seconds]
        return [str(self.n), str(self.n_b), str(self.iterations)] + [f"{v:.5e}" for v in vals]


@dataclass
class RunReport:
    config: RunConfig
    rows: list[GridResult] = field(default_factory=list)
    failure: str | None = None
    failure_kind: str | None = None  # "convergence" or "error"

    @property
    def ok(self) -> bool:
        return self.failure is None

    def table(self) -> str:
        lines = [",".join(TABLE_HEADER)] + [",".join(r.row()) for r in self.rows]
        return "\n".join(lines) + "\n"


def grid_errors(numerical: np.ndarray, exact: np.ndarray, mask: np.ndarray) -> tuple[float, float]:
    """``(sqrt(mean |v - u|^2), max |v - u|)`` over the nodes in ``mask``; NaN for an empty set."""
    if not np.any(mask):
        return math.nan, math.nan
    e = np.abs(numerical[mask] - exact[mask])
    return float(np.sqrt(np.mean(e * e))), float(e.max())


def convergence_order(report: RunReport | list[GridResult]) -> dict[str, list[float | None]]:
    """``log2(e_N / e_2N)`` per norm for consecutive rows; ``None`` where undefined."""
    rows = report.rows if isinstance(report, RunReport) else report
    if len(rows) < 2:
        raise ValueError("convergence orders need at least two grid rows")
    out: dict[str, list[float | None]] = {}
    for norm in NORMS:
        orders: list[float | None] = []
        for coarse, fine in zip(rows, rows[1:]):
            a, b = getattr(coarse, norm), getattr(fine, norm)
            ratio = fine.n / coarse.n
            if not (a > 0 and b > 0) or not math.isfinite(a) or not math.isfinite(b):
                orders.append(None)
            else:
                orders.append(math.log(a / b) / math.log(ratio))
        out[norm] = orders
    return out


def _reference_node(mask: np.ndarray, X: np.ndarray, Y: np.ndarray) -> tuple[int, int]:
    """Node of ``mask`` closest to the centroid of ``mask``."""
    cx, cy = X[mask].mean(), Y[mask].mean()
    d = np.where(mask, (X - cx) ** 2 + (Y - cy) ** 2, np.inf)
    return np.unravel_index(int(np.argmin(d)), d.shape)


def run_grid(cfg: RunConfig, n: int, geometry: Geometry | None = None) -> tuple[GridResult, np.ndarray]:
    """Solve one grid of the sweep; returns the row and the grid solution."""
    geometry = geometry or cfg.geometry()
    spec = formulation(cfg)
    ui, uo = functions.lookup(cfg.exact_in), functions.lookup(cfg.exact_out)
    start = time.perf_counter()
    disc = Discretization(build_grid(cfg.lower, cfg.upper, n), geometry)
    sol = solve(spec, disc, cfg.tol, cfg.max_iter)
    seconds = time.perf_counter() - start
    X, Y = disc.grid.mesh()
    inside = disc.region > 0
    u = sol.u
    if cfg.kind in ("dirichlet", "neumann"):
        exact = ui(X, Y)
        if cfg.kind == "neumann" and cfg.kappa_in == 0.0:
            # the field is fixed only up to a constant; match the exact value at one node
            i, j = _reference_node(inside, X, Y)
            u = u + (exact[i, j] - u[i, j])
        l2_in, linf_in = grid_errors(u, exact, inside)
        l2_out = linf_out = math.nan
    else:
        exact = np.where(inside, ui(X, Y), uo(X, Y))
        l2_in, linf_in = grid_errors(u, exact, inside)
        l2_out, linf_out = grid_errors(u, exact, ~inside)
    row = GridResult(n, sol.n_b, sol.gmres.iterations, l2_in, linf_in, l2_out, linf_out, seconds, list(sol.gmres.residuals))
    return row, u


# -- artifacts ----------------------------------------------------------------


def write_field_dump(path: Path, lower, upper, n: int, values: np.ndarray) -> None:
    """Plain-text dump: two header lines, then one row per x index with 17 significant digits."""
    header = f"box {lower[0]!r} {lower[1]!r} {upper[0]!r} {upper[1]!r}\nN {n}"
    np.savetxt(path, np.asarray(values).reshape(n + 1, n + 1), fmt="%.17g", header=header, comments="# ")


def read_field_dump(path: Path) -> tuple[tuple[float, float], tuple[float, float], int, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        box = fh.readline().split()[2:]
        n = int(fh.readline().split()[2])
    lo = (float(box[0]), float(box[1]))
    hi = (float(box[2]), float(box[3]))
    values = np.loadtxt(path, comments="#", ndmin=2)
    return lo, hi, n, values


def _file_logger(path: Path) -> logging.Logger:
    log = logging.getLogger(f"kfbi.run.{path}")
    log.setLevel(logging.INFO)
    log.propagate = False
    for h in list(log.handlers):
        log.removeHandler(h)
        h.close()
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.addHandler(handler)
    return log


def run_experiment(cfg: RunConfig, out_dir: Path | str | None = None, dump_fields: bool = True) -> RunReport:
    """Run every grid of ``cfg`` in order.

    Writes ``errors.csv``, ``run.log`` (with GMRES residual histories) and,
    with ``dump_fields``, ``field_N<n>.txt`` per grid into ``out_dir`` (or
    the config's output directory; nothing is written when both are unset).
    A failing grid stops the sweep; the report then holds the rows so far.
    """
    out = Path(out_dir) if out_dir is not None else cfg.output
    report = RunReport(cfg)
    log = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log = _file_logger(out / "run.log")
        log.info("config %s kind=%s sizes=%s tol=%g max_iter=%d", cfg.name, cfg.kind, ",".join(map(str, cfg.sizes)), cfg.tol, cfg.max_iter)
    try:
        geometry = cfg.geometry()
    except ValueError as exc:
        report.failure, report.failure_kind = f"invalid geometry: {exc}", "error"
        return _finish(report, out, log)
    for n in cfg.sizes:
        try:
            row, u = run_grid(cfg, n, geometry)
        except ConvergenceError as exc:
            report.failure, report.failure_kind = f"N={n}: {exc}", "convergence"
            if log:
                log.info("N=%d failed: %s", n, exc)
                log.info("N=%d residuals %s", n, " ".join(f"{r:.3e}" for r in exc.result.residuals))
            break
        except (ValueError, ArithmeticError) as exc:
            report.failure, report.failure_kind = f"N={n}: {exc}", "error"
            if log:
                log.info("N=%d failed: %s", n, exc)
            break
        report.rows.append(row)
        if log:
            log.info("N=%d Nb=%d iters=%d linf_in=%.5e linf_out=%.5e seconds=%.3f", n, row.n_b, row.iterations, row.linf_interior, row.linf_exterior, row.seconds)
            log.info("N=%d residuals %s", n, " ".join(f"{r:.3e}" for r in row.residuals))
        if out is not None and dump_fields:
            write_field_dump(out / f"field_N{n}.txt", cfg.lower, cfg.upper, n, u)
    return _finish(report, out, log)


def _finish(report: RunReport, out: Path | None, log: logging.Logger | None) -> RunReport:
    if out is not None:
        (out / "errors.csv").write_text(report.table(), encoding="utf-8")
    if log:
        if len(report.rows) >= 2:
            for norm, orders in convergence_order(report).items():
                log.info("order %s %s", norm, " ".join("undefined" if o is None else f"{o:.2f}" for o in orders))
        log.info("status %s", "ok" if report.ok else f"failed ({report.failure})")
        for h in list(log.handlers):
            log.removeHandler(h)
            h.close()
    return report


def with_overrides(cfg: RunConfig, tol: float | None = None, sizes: tuple[int, ...] | None = None) -> RunConfig:
    changes = {}
    if tol is not None:
        changes["tol"] = tol
    if sizes is not None:
        changes["sizes"] = tuple(sizes)
    return replace(cfg, **changes) if changes else cfg
