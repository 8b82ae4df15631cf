"""Relax the Gaussian Fokker-Planck problem to its steady state with both schemes.

Run: python3 demos/fp_steady_state.py
"""
import math

from gflowfd.driver import discrete_errors
from gflowfd.presets import get_preset
from gflowfd.solver import run

preset = get_preset("fp_gaussian")
for order in (1, 2):
    grid = preset.grid(order, 32 // order)
    spec = preset.problem(grid, T=20.0)
    result = run(spec)
    l2, linf = discrete_errors(grid, result.final.rho, preset.exact_at(grid, math.inf))
    energy = result.column("energy")
    print(
        f"degree {order}: {result.final.n} steps, l2 {l2:.3e}, linf {linf:.3e}, "
        f"min rho {result.column('min_rho').min():.3e}, energy {energy[0]:.6f} -> {energy[-1]:.6f}"
    )
