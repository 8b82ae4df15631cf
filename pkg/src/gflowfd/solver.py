"""Time stepping for the Fokker-Planck and Keller-Segel gradient flows.

Both equations are written as ``d_t rho = div(M grad(rho / M))`` with
mobility ``M = exp(-V)`` (Fokker-Planck) or ``M = exp(c)`` (Keller-Segel,
``-Lap c + alpha c = rho``).  One step freezes ``M`` at the old level and
solves the SPD system

    (W M + dt S(M)) g_new = W M g_old  (+ dt W f)

for ``g = rho / M``, then sets ``rho_new = M g_new``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_step_matrix, assemble_stiffness
from .grid import Grid, QuadratureWeights, lumped_weights
from .linalg import (
    DEFAULT_PCG_TOL,
    ConvergenceError,
    SolveReport,
    build_laplacian_preconditioner,
    helmholtz_solve,
    pcg_solve,
)

__all__ = [
    "FokkerPlanck",
    "KellerSegel",
    "ProblemSpec",
    "State",
    "RunResult",
    "SimulationError",
    "BlowUpError",
    "SolverFailure",
    "CertificationFailure",
    "InstabilityError",
    "NegativeDensityError",
    "MOBILITY_OVERFLOW",
    "initial_state",
    "compute_mobility",
    "log_mobility",
    "step",
    "step_explicit",
    "energy",
    "run",
    "explicit_dt",
]

log = logging.getLogger(__name__)

# exp overflows just above 709.78; abort well before producing inf.
MOBILITY_OVERFLOW = 700.0


class SimulationError(RuntimeError):
    """Base class for aborted steps; ``result`` holds a partial run if any."""

    result = None


class BlowUpError(SimulationError):
    pass


class SolverFailure(SimulationError):
    def __init__(self, message, report: SolveReport | None = None):
        super().__init__(message)
        self.report = report


class CertificationFailure(SimulationError):
    pass


class InstabilityError(SimulationError):
    pass


class NegativeDensityError(ValueError):
    pass


@dataclass(frozen=True)
class FokkerPlanck:
    """Linear Fokker-Planck with nodal potential values V (grid shaped)."""

    potential: np.ndarray


@dataclass(frozen=True)
class KellerSegel:
    """Keller-Segel with ``-Lap c + alpha c = rho`` and optional nodal source f."""

    alpha: float = 1.0
    source: np.ndarray | None = None


@dataclass(frozen=True)
class ProblemSpec:
    """Everything needed to march one problem.

    The time step is ``dt`` if given, otherwise ``dt_factor * h``.
    A run stops at ``T`` or when ``||rho_new - rho||_inf <= steady_tol``,
    whichever comes first (at least one must be set).
    """

    grid: Grid
    kind: FokkerPlanck | KellerSegel
    rho0: np.ndarray
    dt: float | None = None
    dt_factor: float = 1.0
    T: float | None = None
    steady_tol: float | None = None
    max_steps: int | None = None
    pcg_tol: float = DEFAULT_PCG_TOL
    cert_mode: str = "advisory"  # advisory | strict | off
    weights: QuadratureWeights | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        rho0 = np.asarray(self.rho0, dtype=float).reshape(self.grid.shape)
        if np.any(rho0 < 0) or not np.all(np.isfinite(rho0)):
            raise ValueError("initial density must be finite and nonnegative")
        object.__setattr__(self, "rho0", rho0)
        if isinstance(self.kind, KellerSegel) and not self.kind.alpha > 0:
            raise ValueError("Keller-Segel alpha must be positive")
        if self.cert_mode not in ("advisory", "strict", "off"):
            raise ValueError(f"unknown cert_mode {self.cert_mode!r}")
        if self.weights is None:
            object.__setattr__(self, "weights", lumped_weights(self.grid))

    @property
    def time_step(self) -> float:
        dt = self.dt if self.dt is not None else self.dt_factor * self.grid.h
        if not dt > 0:
            raise ValueError(f"time step must be positive, got {dt}")
        return dt

    @property
    def is_keller_segel(self) -> bool:
        return isinstance(self.kind, KellerSegel)


@dataclass(frozen=True)
class State:
    t: float
    n: int
    rho: np.ndarray
    c: np.ndarray | None
    log_mobility: np.ndarray
    mass: float
    energy: float
    min_rho: float
    linf_drho: float = float("nan")
    report: SolveReport | None = None
    certified: bool | None = None

    @property
    def mobility(self) -> np.ndarray:
        return np.exp(self.log_mobility)

    def record(self) -> dict:
        return {
            "step": self.n,
            "t": self.t,
            "mass": self.mass,
            "energy": self.energy,
            "min_rho": self.min_rho,
            "linf_drho": self.linf_drho,
            "pcg_iters": self.report.iterations if self.report else 0,
        }


def log_mobility(spec: ProblemSpec, c: np.ndarray | None) -> np.ndarray:
    if spec.is_keller_segel:
        if c is None:
            raise ValueError("Keller-Segel mobility needs c")
        cmax = float(np.max(c))
        if not cmax <= MOBILITY_OVERFLOW:
            raise BlowUpError(f"chemoattractant reached {cmax:.6g} > {MOBILITY_OVERFLOW}; exp(c) would overflow")
        return np.asarray(c, dtype=float)
    v = np.asarray(spec.kind.potential, dtype=float).reshape(spec.grid.shape)
    if not np.max(-v) <= MOBILITY_OVERFLOW:
        raise BlowUpError("potential too negative; exp(-V) would overflow")
    return -v


def compute_mobility(state: State, spec: ProblemSpec) -> np.ndarray:
    """Nodal ``exp(c)`` or ``exp(-V)``."""
    return np.exp(log_mobility(spec, state.c))


def _energy(w, rho, logm, c) -> float:
    if np.any(rho < 0):
        raise NegativeDensityError(f"energy undefined for negative density (min {rho.min():.3e})")
    pos = rho > 0
    term = np.zeros_like(rho)
    term[pos] = rho[pos] * (np.log(rho[pos]) - logm[pos])  # 0 log 0 := 0
    term -= rho
    if c is not None:
        term += 0.5 * c * rho
    return float(np.sum(w * term))


def energy(state: State, spec: ProblemSpec) -> float:
    """Discrete free energy ``sum w (rho log(rho/M) - rho + c rho / 2)``.

    The ``c rho / 2`` term is absent for Fokker-Planck.
    """
    return _energy(spec.weights.w, state.rho, state.log_mobility, state.c)


def _safe_energy(w, rho, logm, c) -> float:
    try:
        return _energy(w, rho, logm, c)
    except NegativeDensityError:
        return float("nan")


def _make_state(spec: ProblemSpec, t, n, rho, prev_rho=None, report=None, certified=None) -> State:
    c = helmholtz_solve(spec.grid, spec.kind.alpha, rho) if spec.is_keller_segel else None
    logm = log_mobility(spec, c)
    w = spec.weights.w
    return State(
        t=t,
        n=n,
        rho=rho,
        c=c,
        log_mobility=logm,
        mass=float(np.sum(w * rho)),
        energy=_safe_energy(w, rho, logm, c),
        min_rho=float(rho.min()),
        linf_drho=float(np.max(np.abs(rho - prev_rho))) if prev_rho is not None else float("nan"),
        report=report,
        certified=certified,
    )


def initial_state(spec: ProblemSpec) -> State:
    return _make_state(spec, 0.0, 0, spec.rho0.copy())


def _source(spec: ProblemSpec):
    if spec.is_keller_segel and spec.kind.source is not None:
        return np.asarray(spec.kind.source, dtype=float).reshape(spec.grid.shape)
    return None


def _certify(spec: ProblemSpec, m: np.ndarray, dt: float, matrix) -> bool:
    # local import: monotonicity depends on assembly only, keep solver import light
    from .monotonicity import certify_step

    return certify_step(spec.grid, m, dt, step_matrix=matrix, weights=spec.weights)


def step(state: State, spec: ProblemSpec, dt: float | None = None) -> State:
    """Advance one semi-implicit step.

    Raises
    ------
    SolverFailure
        PCG did not converge.
    BlowUpError
        The new chemoattractant would overflow ``exp``.
    CertificationFailure
        ``cert_mode='strict'`` and no monotonicity certificate passes.
    """
    dt = spec.time_step if dt is None else dt
    grid, w = spec.grid, spec.weights
    m = np.exp(state.log_mobility)
    a = assemble_step_matrix(grid, w, m, dt)

    certified = None
    if spec.cert_mode != "off":
        certified = _certify(spec, m, dt, a)
        if spec.cert_mode == "strict" and not certified:
            raise CertificationFailure(f"no monotonicity certificate for step {state.n + 1}")

    rhs = state.rho.copy()
    f = _source(spec)
    if f is not None:
        rhs = rhs + dt * f
    b = (w.w * rhs).ravel()
    g_old = (state.rho / m).ravel()
    mean = float(np.exp(np.mean(state.log_mobility)))
    prec = build_laplacian_preconditioner(grid, w, dt, mean, coeff=m)
    try:
        g_new, report = pcg_solve(a, b, prec, tol=spec.pcg_tol, x0=g_old)
    except ConvergenceError as err:
        raise SolverFailure(str(err), err.report) from err
    rho_new = m * g_new.reshape(grid.shape)
    return _make_state(spec, state.t + dt, state.n + 1, rho_new, state.rho, report, certified)


def explicit_dt(grid: Grid) -> float:
    """Default forward-Euler step ``h^2 / 8``."""
    return grid.h**2 / 8.0


def step_explicit(state: State, spec: ProblemSpec, dt: float | None = None) -> State:
    """Forward Euler on the same Q1 spatial operator: ``rho -= dt W^-1 S(M) g``."""
    if spec.grid.order != 1:
        raise ValueError("explicit stepping is only provided for the Q1 discretization")
    dt = explicit_dt(spec.grid) if dt is None else dt
    m = np.exp(state.log_mobility)
    s = assemble_stiffness(spec.grid, m).matrix
    g = (state.rho / m).ravel()
    rho_new = state.rho - dt * (s @ g).reshape(spec.grid.shape) / spec.weights.w
    f = _source(spec)
    if f is not None:
        rho_new = rho_new + dt * f
    if not np.all(np.isfinite(rho_new)) or rho_new.min() < 0:
        raise InstabilityError(
            f"explicit step {state.n + 1} lost positivity/finiteness (min rho {np.nanmin(rho_new):.3e}); reduce dt"
        )
    return _make_state(spec, state.t + dt, state.n + 1, rho_new, state.rho)


@dataclass
class RunResult:
    records: list[dict]
    final: State
    status: str = "ok"
    error: Exception | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([r["t"] for r in self.records])

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records])


def run(spec: ProblemSpec, stepper=None, dt: float | None = None, callback=None) -> RunResult:
    """March until ``T`` or steady state; returns per-step diagnostics.

    The last step is shortened to land exactly on ``T``.  On a step error
    the exception is re-raised with ``err.result`` holding the partial run.
    """
    if spec.T is None and spec.steady_tol is None and spec.max_steps is None:
        raise ValueError("need T, steady_tol or max_steps to know when to stop")
    stepper = stepper or step
    dt = spec.time_step if dt is None else dt
    state = initial_state(spec)
    records = [state.record()]
    if callback:
        callback(state)
    eps = 1e-12 * dt
    while True:
        if spec.max_steps is not None and state.n >= spec.max_steps:
            break
        if spec.T is not None and state.t >= spec.T - eps:
            break
        h = dt if spec.T is None else min(dt, spec.T - state.t)
        try:
            state = stepper(state, spec, h)
        except SimulationError as err:
            err.result = RunResult(records, state, type(err).__name__, err)
            raise
        records.append(state.record())
        if callback:
            callback(state)
        if spec.steady_tol is not None and state.linf_drho <= spec.steady_tol:
            log.info("steady state at t=%.6g after %d steps", state.t, state.n)
            break
    return RunResult(records, state)

