"""Compare the fourth-order monotonicity certificates with the dense inverse.

For a few time steps on a smooth and a rough 1D coefficient, print the mesh constraint,
the entrywise split condition and the dense oracle verdict.
"""
import numpy as np

from gflowfd.grid import make_grid
from gflowfd.monotonicity import (
    check_lorenz_sharp,
    check_mesh_constraint,
    lorenz_split,
    scheme_matrix,
    verify_monotone_dense,
)

grid = make_grid(1, 2, (0.0, 1.0), 20)
for amp in (0.1, 1.5):
    coeff = np.exp(amp * np.sin(7 * grid.axes[0]))
    print(f"coefficient exp({amp} sin 7x)")
    print(f"{'dt':>10} {'mesh':>6} {'split':>6} {'dense':>6}  margin (split)")
    for dt in (1e-4, 1e-3, 1e-2, 5e-2, 2e-1):
        a = scheme_matrix(grid, coeff, dt)
        mesh = check_mesh_constraint(grid, coeff, dt)
        sharp = check_lorenz_sharp(lorenz_split(a, grid, coeff, dt))
        dense = verify_monotone_dense(a)
        print(f"{dt:10.0e} {mesh.verdict!s:>6} {sharp.verdict!s:>6} {dense.verdict!s:>6}  {sharp.worst_margin:+.3e}")
