"""Property-based checks of the per-step structure: mass, steady states, positivity, energy."""
import numpy as np
from hypothesis import given, settings, strategies as st

from gflowfd.grid import lumped_weights, make_grid
from gflowfd.linalg import helmholtz_solve
from gflowfd.solver import FokkerPlanck, KellerSegel, ProblemSpec, initial_state, step

problems = st.fixed_dictionaries(
    {
        "dim": st.sampled_from([1, 2]),
        "order": st.sampled_from([1, 2]),
        "cells": st.integers(1, 8),
        "length": st.floats(0.5, 4.0),
        "seed": st.integers(0, 2**31),
        "logdt": st.floats(-2.0, 1.0),
    }
)


def _smooth(g, rng, amp):
    coords = g.mesh()
    k = rng.uniform(0.5, 3.0, size=g.dimension)
    phase = rng.uniform(0, 2 * np.pi, size=g.dimension)
    return amp * np.prod([np.cos(a * x + b) for a, x, b in zip(k, coords, phase)], axis=0)


def _build(p, ks=False):
    rng = np.random.default_rng(p["seed"])
    g = make_grid(p["dim"], p["order"], (0.0, p["length"]), p["cells"])
    rho = np.exp(_smooth(g, rng, 1.0)) * rng.uniform(0.5, 2.0)
    kind = KellerSegel(float(rng.uniform(0.5, 5.0))) if ks else FokkerPlanck(_smooth(g, rng, 1.0))
    return ProblemSpec(g, kind, rho, dt=g.h * 10 ** p["logdt"])


@settings(max_examples=60, deadline=None)
@given(p=problems, ks=st.booleans())
def test_mass_conserved(p, ks):
    spec = _build(p, ks)
    s0 = initial_state(spec)
    s1 = step(s0, spec)
    assert abs(s1.mass - s0.mass) <= 1e-9 * s0.mass


@settings(max_examples=40, deadline=None)
@given(p=problems, scale=st.floats(0.01, 100.0))
def test_steady_state_reproduced(p, scale):
    spec = _build(p)
    m = np.exp(-spec.kind.potential)
    steady = ProblemSpec(spec.grid, spec.kind, scale * m, dt=spec.time_step)
    s1 = step(initial_state(steady), steady)
    assert s1.linf_drho <= 1e-10 * scale * max(1.0, m.max())


@settings(max_examples=40, deadline=None)
@given(p=problems, alpha=st.floats(0.05, 20.0))
def test_helmholtz_mass_identity(p, alpha):
    spec = _build(p)
    w = lumped_weights(spec.grid)
    c = helmholtz_solve(spec.grid, alpha, spec.rho0)
    assert abs(alpha * w.integrate(c) - w.integrate(spec.rho0)) <= 1e-10 * w.integrate(spec.rho0)


@settings(max_examples=60, deadline=None)
@given(p=problems, ks=st.booleans())
def test_certified_steps_positive_and_dissipative(p, ks):
    spec = _build(p, ks)
    s0 = initial_state(spec)
    s1 = step(s0, spec)
    if s1.certified:
        assert s1.rho.min() > 0
        assert s1.energy - s0.energy <= 1e-9 * max(1.0, abs(s0.energy))
    if p["order"] == 1:
        assert s1.certified
