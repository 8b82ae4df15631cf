"""Run configuration, preset runs, convergence studies and certification reports.

Everything here is plumbing around :mod:`gflowfd.solver`; the command line
front end in :mod:`gflowfd.cli` is a thin argparse layer over it.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .assembly import assemble_step_matrix
from .linalg import DEFAULT_PCG_TOL
from .monotonicity import (
    DENSE_CAP,
    check_lorenz_sharp,
    check_mesh_constraint,
    check_mmatrix_rowsum,
    lorenz_split,
    scheme_matrix,
    verify_monotone_dense,
)
from .presets import PRESETS, get_preset
from .solver import (
    ProblemSpec,
    RunResult,
    SimulationError,
    explicit_dt,
    initial_state,
    run,
    step,
    step_explicit,
)

__all__ = [
    "ConfigError",
    "RunConfig",
    "RunOutcome",
    "ConvergenceRow",
    "ConvergenceReport",
    "OUT_ENV",
    "DIAGNOSTIC_COLUMNS",
    "FIELD_COLUMNS",
    "build_problem",
    "run_config",
    "run_preset",
    "run_convergence",
    "certify",
    "write_diagnostics",
    "write_fields",
    "read_config",
    "discrete_errors",
]

OUT_ENV = "GFLOWFD_OUT"
DIAGNOSTIC_COLUMNS = ("step", "t", "mass", "energy", "min_rho", "linf_drho", "pcg_iters")
FIELD_COLUMNS = ("x", "y", "rho", "c")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


@dataclass(frozen=True)
class RunConfig:
    """One simulation, fully specified by flat ``key = value`` pairs.

    ``order`` is the element degree: 1 gives the second-order scheme and 2
    the fourth-order scheme.  ``cells``, ``T`` and ``steady_tol`` fall back
    to the preset defaults when left unset.
    """

    preset: str = "fp_gaussian"
    order: int | None = None
    cells: int | None = None
    dt: float | None = None
    dt_policy: str = "auto"  # auto | dx | fixed | explicit
    dt_factor: float = 1.0
    T: float | None = None
    steady_tol: float | None = None
    max_steps: int | None = None
    stepper: str = "implicit"  # implicit | explicit
    cert_mode: str = "advisory"
    pcg_tol: float = DEFAULT_PCG_TOL
    out: str | None = None

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {', '.join(sorted(PRESETS))}")
        if self.order is not None and self.order not in (1, 2):
            raise ConfigError(f"order must be 1 or 2, got {self.order}")
        if self.cells is not None and self.cells < 1:
            raise ConfigError(f"cells must be positive, got {self.cells}")
        if self.dt_policy not in ("auto", "dx", "fixed", "explicit"):
            raise ConfigError(f"dt_policy must be auto, dx, fixed or explicit, got {self.dt_policy!r}")
        if self.dt_policy == "fixed" and self.dt is None:
            raise ConfigError("dt_policy = fixed needs dt")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.dt_factor > 0:
            raise ConfigError(f"dt_factor must be positive, got {self.dt_factor}")
        if self.T is not None and not self.T >= 0:
            raise ConfigError(f"T must be nonnegative, got {self.T}")
        if self.steady_tol is not None and not self.steady_tol > 0:
            raise ConfigError(f"steady_tol must be positive, got {self.steady_tol}")
        if self.max_steps is not None and self.max_steps < 0:
            raise ConfigError(f"max_steps must be nonnegative, got {self.max_steps}")
        if self.stepper not in ("implicit", "explicit"):
            raise ConfigError(f"stepper must be implicit or explicit, got {self.stepper!r}")
        if self.cert_mode not in ("advisory", "strict", "off"):
            raise ConfigError(f"cert_mode must be advisory, strict or off, got {self.cert_mode!r}")
        if not self.pcg_tol > 0:
            raise ConfigError(f"pcg_tol must be positive, got {self.pcg_tol}")

    # -- resolution against the preset ---------------------------------------

    def resolved(self) -> "RunConfig":
        """Copy with preset defaults filled in (what actually runs)."""
        d = get_preset(self.preset).defaults
        kw = {}
        for key in ("order", "cells", "T", "steady_tol"):
            if getattr(self, key) is None and key in d:
                kw[key] = d[key]
        cfg = replace(self, **kw)
        if cfg.T is None and cfg.steady_tol is None and cfg.max_steps is None:
            raise ConfigError("no stopping rule: set T, steady_tol or max_steps")
        return cfg

    # -- text form -------------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"# gflowfd run configuration ({self.preset})"]
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                lines.append(f"# {f.name} =")
            else:
                text = repr(float(v)) if isinstance(v, float) else _fmt(v)
                lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for raw_key, raw in values.items():
            key = raw_key.replace("-", "_")
            if key not in types:
                raise ConfigError(f"unknown config key {raw_key!r}")
            kw[key] = _coerce(key, types[key], raw)
        return cls(**kw)

    def with_overrides(self, values: dict) -> "RunConfig":
        merged = {k: v for k, v in asdict(self).items() if v is not None}
        merged.update({k.replace("-", "_"): v for k, v in values.items() if v is not None})
        return RunConfig.from_mapping(merged)


def _coerce(key, typ, raw):
    if raw is None:
        return None
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if text == "" or text.lower() == "none":
        return None
    typ = str(typ)
    try:
        if "int" in typ:
            f = float(text)
            if f != int(f):
                raise ValueError
            return int(f)
        if "float" in typ:
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return text


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


# -- building and running --------------------------------------------------------


def build_problem(config: RunConfig) -> ProblemSpec:
    cfg = config.resolved()
    preset = get_preset(cfg.preset)
    grid = preset.grid(cfg.order, cfg.cells)
    policy = cfg.dt_policy
    if policy == "auto":
        policy = "fixed" if cfg.dt is not None else ("explicit" if cfg.stepper == "explicit" else "dx")
    if cfg.stepper == "explicit" and cfg.order != 1:
        raise ConfigError("the explicit stepper is only available for order 1")
    if policy == "fixed":
        dt = cfg.dt
    elif policy == "explicit":
        dt = explicit_dt(grid) * cfg.dt_factor
    else:
        dt = cfg.dt_factor * grid.h
    try:
        return preset.problem(
            grid,
            dt=dt,
            T=cfg.T,
            steady_tol=cfg.steady_tol,
            max_steps=cfg.max_steps,
            pcg_tol=cfg.pcg_tol,
            cert_mode=cfg.cert_mode,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err


def discrete_errors(grid, u, exact) -> tuple[float, float]:
    """``(l2, linf)`` with ``l2 = sqrt(prod(h) * sum |u - exact|^2)``."""
    e = np.asarray(u) - np.asarray(exact)
    cell = float(np.prod(grid.spacings))
    return math.sqrt(cell * float(np.sum(e * e))), float(np.max(np.abs(e)))


def write_diagnostics(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAGNOSTIC_COLUMNS)
        for r in records:
            w.writerow([_fmt(r[k]) for k in DIAGNOSTIC_COLUMNS])


def write_fields(grid, rho, c, path) -> None:
    x, y = grid.mesh()
    c = np.full(grid.shape, np.nan) if c is None else c
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIELD_COLUMNS)
        for row in zip(x.ravel(), y.ravel(), np.asarray(rho).ravel(), np.asarray(c).ravel()):
            w.writerow([_fmt(v) for v in row])


@dataclass
class RunOutcome:
    status: str  # ok | SolverFailure | BlowUpError | CertificationFailure | InstabilityError
    result: RunResult
    summary: dict
    paths: dict = field(default_factory=dict)
    error: Exception | None = None


def _out_dir(config: RunConfig, out=None) -> Path | None:
    target = out or config.out
    if target is None:
        return None
    p = Path(target)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ConfigError(f"cannot create output directory {p}: {err}") from err
    if not os.access(p, os.W_OK):
        raise ConfigError(f"output directory {p} is not writable")
    return p


def run_config(config: RunConfig, out=None, callback=None) -> RunOutcome:
    """Run one configuration; write artifacts when an output directory is set.

    Solver errors do not propagate: they end the run and are reported in
    ``RunOutcome.status`` with the partial trajectory kept.
    """
    cfg = config.resolved()
    spec = build_problem(cfg)
    outdir = _out_dir(cfg, out)
    stepper = step_explicit if cfg.stepper == "explicit" else step
    certified = []

    def track(state):
        if state.n > 0:
            certified.append(state.certified)
        if callback:
            callback(state)

    start = time.perf_counter()
    error = None
    try:
        result = run(spec, stepper=stepper, callback=track)
        status = "ok"
    except SimulationError as err:
        result, status, error = err.result, type(err).__name__, err
    wall = time.perf_counter() - start

    final = result.final
    summary = {
        "preset": cfg.preset,
        "status": status,
        "message": str(error) if error else "",
        "order": cfg.order,
        "cells": cfg.cells,
        "nodes_per_axis": spec.grid.n,
        "h": spec.grid.h,
        "dt": spec.time_step,
        "steps": final.n,
        "t_final": final.t,
        "mass_initial": result.records[0]["mass"],
        "mass_final": final.mass,
        "relative_mass_drift": abs(final.mass - result.records[0]["mass"]) / abs(result.records[0]["mass"]),
        "energy_final": final.energy,
        "min_rho_over_run": float(np.min([r["min_rho"] for r in result.records])),
        "max_energy_increase": _max_energy_increase(result.records),
        "certified_steps": sum(1 for c in certified if c),
        "uncertified_steps": sum(1 for c in certified if c is False),
        "wall_seconds": wall,
    }
    exact = get_preset(cfg.preset).exact_at(spec.grid, final.t)
    if exact is not None:
        summary["l2_error"], summary["linf_error"] = discrete_errors(spec.grid, final.rho, exact)
        if cfg.preset == "fp_gaussian":
            steady = get_preset(cfg.preset).exact_at(spec.grid, math.inf)
            summary["l2_error_steady"], summary["linf_error_steady"] = discrete_errors(spec.grid, final.rho, steady)

    paths = {}
    if outdir is not None:
        paths["config"] = outdir / "config.txt"
        paths["config"].write_text(cfg.to_text())
        paths["diagnostics"] = outdir / "diagnostics.csv"
        write_diagnostics(result.records, paths["diagnostics"])
        paths["fields"] = outdir / "final.csv"
        write_fields(spec.grid, final.rho, final.c, paths["fields"])
        paths["certificate"] = outdir / "certificate.json"
        paths["certificate"].write_text(json.dumps(certify(cfg), indent=2) + "\n")
        paths["summary"] = outdir / "summary.json"
        paths["summary"].write_text(json.dumps(_jsonable(summary), indent=2) + "\n")
    return RunOutcome(status, result, summary, {k: str(v) for k, v in paths.items()}, error)


def _max_energy_increase(records) -> float:
    e = np.array([r["energy"] for r in records])
    if e.size < 2:
        return 0.0
    rel = np.diff(e) / np.maximum(1.0, np.abs(e[:-1]))
    return float(np.nanmax(rel))


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, (float, np.floating)):
            v = float(v)
            out[k] = v if math.isfinite(v) else str(v)
        elif isinstance(v, np.integer):
            out[k] = int(v)
        else:
            out[k] = v
    return out


def run_preset(name: str, overrides: dict | None = None, out=None, callback=None) -> RunOutcome:
    """Run a named preset with ``key -> value`` overrides."""
    cfg = RunConfig(preset=name).with_overrides(overrides or {})
    return run_config(cfg, out=out, callback=callback)


# -- certification ---------------------------------------------------------------


def certify(config: RunConfig, dense_cap: int = DENSE_CAP) -> dict:
    """Certificate reports for the configured problem's first step matrix."""
    spec = build_problem(config)
    grid = spec.grid
    state = initial_state(spec)
    m = state.mobility
    dt = spec.time_step
    reports = []
    if grid.order == 1:
        a = assemble_step_matrix(grid, spec.weights, m, dt)
        reports.append(check_mmatrix_rowsum(a))
        dense_target = a
    else:
        reports.append(check_mesh_constraint(grid, m, dt))
        a = scheme_matrix(grid, m, dt, spec.weights)
        reports.append(check_lorenz_sharp(lorenz_split(a, grid, m, dt)))
        dense_target = a
    dense = None
    if grid.size <= dense_cap:
        dense = verify_monotone_dense(dense_target, cap=dense_cap)
        reports.append(dense)
    cheap = [r for r in reports if r.method != "dense oracle"]
    return {
        "preset": config.preset,
        "order": grid.order,
        "nodes_per_axis": grid.n,
        "h": grid.h,
        "dt": dt,
        "certified": any(r.verdict for r in cheap),
        "dense_oracle": None if dense is None else bool(dense.verdict),
        "dense_skipped": None if dense is not None else f"{grid.size} unknowns exceed dense cap {dense_cap}",
        "reports": [r.to_dict() for r in reports],
    }


# -- convergence studies -------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    order: int
    nodes: int
    h: float
    dt: float
    l2_error: float
    l2_order: float | None
    linf_error: float
    linf_order: float | None


@dataclass
class ConvergenceReport:
    preset: str
    T: float
    rows: list[ConvergenceRow]
    dyadic: bool = True

    def for_order(self, order: int) -> list[ConvergenceRow]:
        return [r for r in self.rows if r.order == order]

    def to_csv(self, path) -> None:
        names = [f.name for f in fields(ConvergenceRow)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for r in self.rows:
                w.writerow(["" if getattr(r, n) is None else _fmt(getattr(r, n)) for n in names])

    def to_text(self) -> str:
        out = []
        for order in sorted({r.order for r in self.rows}):
            label = "second" if order == 1 else "fourth"
            out.append(f"{self.preset}, {label} order scheme (element degree {order}), T = {self.T:g}")
            out.append(f"{'grid':>11}  {'l2 error':>10}  {'order':>5}  {'linf error':>10}  {'order':>5}")
            for r in self.for_order(order):
                o2 = "-" if r.l2_order is None else f"{r.l2_order:.2f}"
                oi = "-" if r.linf_order is None else f"{r.linf_order:.2f}"
                grid = f"{r.nodes}x{r.nodes}"
                out.append(f"{grid:>11}  {r.l2_error:10.2e}  {o2:>5}  {r.linf_error:10.2e}  {oi:>5}")
            out.append("")
        return "\n".join(out)


def _is_dyadic(nodes) -> bool:
    return all(b - 1 == 2 * (a - 1) for a, b in zip(nodes, nodes[1:]))


def run_convergence(
    preset: str,
    orders=(1, 2),
    nodes=(9, 17, 33, 65, 129),
    T: float = 1.0,
    dt_factor: float = 1.0,
    pcg_tol: float = DEFAULT_PCG_TOL,
    workers: int = 1,
    out=None,
) -> ConvergenceReport:
    """Error table at time ``T`` against the preset's exact solution.

    ``nodes`` are per-axis node counts shared by all orders (odd counts for
    order 2).  Orders are ``log2`` error ratios and are left out, with a
    warning, when successive grids are not dyadic refinements.
    """
    p = get_preset(preset)
    if p.exact is None:
        raise ConfigError(f"preset {preset!r} has no exact solution")
    nodes = [int(n) for n in nodes]
    for order in orders:
        for n in nodes:
            if (n - 1) % order or n < order + 1:
                raise ConfigError(f"{n} nodes per axis is not a valid order-{order} grid")
    dyadic = _is_dyadic(nodes)
    if not dyadic:
        warnings.warn("grid list is not a dyadic refinement; convergence orders omitted", stacklevel=2)

    jobs = [(order, n) for order in orders for n in nodes]

    def one(job):
        order, n = job
        cfg = RunConfig(
            preset=preset, order=order, cells=(n - 1) // order, T=T, dt_factor=dt_factor, pcg_tol=pcg_tol, cert_mode="off"
        )
        spec = build_problem(cfg)
        res = run(spec)
        l2, linf = discrete_errors(spec.grid, res.final.rho, p.exact_at(spec.grid, res.final.t))
        return order, n, spec.grid.h, spec.time_step, l2, linf

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(one, jobs))  # map keeps job order
    else:
        raw = [one(j) for j in jobs]

    rows = []
    for order in orders:
        prev = None
        for o, n, h, dt, l2, linf in raw:
            if o != order:
                continue
            l2o = linfo = None
            if prev is not None and dyadic:
                l2o = math.log2(prev[0] / l2) if l2 > 0 else None
                linfo = math.log2(prev[1] / linf) if linf > 0 else None
            rows.append(ConvergenceRow(order, n, h, dt, l2, l2o, linf, linfo))
            prev = (l2, linf)
    report = ConvergenceReport(preset, T, rows, dyadic)
    if out is not None:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        report.to_csv(d / "convergence.csv")
        (d / "convergence.txt").write_text(report.to_text())
    return report
