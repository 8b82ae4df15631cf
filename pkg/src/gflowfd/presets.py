"""Named test problems with their initial data and exact solutions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import Grid, make_grid
from .solver import FokkerPlanck, KellerSegel, ProblemSpec

__all__ = ["Preset", "PRESETS", "get_preset", "fp_exact"]


def fp_exact(t: float, x, y):
    """Gaussian solution of the Fokker-Planck test; ``t = inf`` gives the steady state."""
    s = 1.0 if np.isinf(t) else -np.expm1(-2.0 * t)
    return np.exp(-(x * x + y * y) / (2.0 * s)) / (2.0 * np.pi * s)


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    domain: tuple[float, float]
    kind: str  # "fp" | "ks"
    rho0: Callable
    defaults: dict
    potential: Callable | None = None
    source: Callable | None = None
    alpha: float = 1.0
    exact: Callable | None = None  # exact(t, x, y)

    def grid(self, order: int, cells: int) -> Grid:
        return make_grid(2, order, self.domain, cells)

    def problem(self, grid: Grid, **kw) -> ProblemSpec:
        if self.kind == "fp":
            kind = FokkerPlanck(grid.sample(self.potential))
        else:
            f = grid.sample(self.source) if self.source is not None else None
            kind = KellerSegel(self.alpha, f)
        return ProblemSpec(grid, kind, grid.sample(self.rho0), **kw)

    def exact_at(self, grid: Grid, t: float) -> np.ndarray | None:
        if self.exact is None:
            return None
        x, y = grid.mesh()
        return np.asarray(self.exact(t, x, y), dtype=float) * np.ones(grid.shape)


def _ks_manufactured(x, y):
    return 3.0 * np.cos(x) * np.cos(y) + 3.0


def _ks_source(x, y):
    return -3.0 * np.cos(2 * x) * np.cos(y) ** 2 - 3.0 * np.cos(x) ** 2 * np.cos(2 * y)


PRESETS = {
    p.name: p
    for p in [
        Preset(
            "fp_gaussian",
            "linear Fokker-Planck, V = (x^2+y^2)/2 on (-3,3)^2, started from the exact solution at t = 1",
            (-3.0, 3.0),
            "fp",
            rho0=lambda x, y: fp_exact(1.0, x, y),
            potential=lambda x, y: 0.5 * (x * x + y * y),
            exact=lambda t, x, y: fp_exact(1.0 + t, x, y),
            defaults={"order": 2, "cells": 16, "T": 20.0},
        ),
        Preset(
            "ks_steady_source",
            "Keller-Segel with a source on (0,pi)^2 whose steady solution is 3 cos x cos y + 3",
            (0.0, np.pi),
            "ks",
            rho0=_ks_manufactured,
            source=_ks_source,
            exact=lambda t, x, y: _ks_manufactured(x, y),
            defaults={"order": 2, "cells": 8, "T": 1.0},
        ),
        Preset(
            "ks_subcritical",
            "Keller-Segel, rho0 = 60/(1+40 r^2) on (-2,2)^2 (below critical mass)",
            (-2.0, 2.0),
            "ks",
            rho0=lambda x, y: 60.0 / (1.0 + 40.0 * (x * x + y * y)),
            defaults={"order": 2, "cells": 50, "steady_tol": 1e-8, "T": 30.0},
        ),
        Preset(
            "ks_supercritical",
            "Keller-Segel, rho0 = 100/(1+40 r^2) on (-2,2)^2 (above critical mass, blows up)",
            (-2.0, 2.0),
            "ks",
            rho0=lambda x, y: 100.0 / (1.0 + 40.0 * (x * x + y * y)),
            defaults={"order": 2, "cells": 70, "T": 0.8},
        ),
    ]
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None
