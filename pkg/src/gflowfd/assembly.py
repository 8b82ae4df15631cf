"""Stiffness, step and Helmholtz operators on uniform Gauss-Lobatto grids.

The variable-coefficient stiffness matrix is assembled element by element
with (k+1)-point Gauss-Lobatto quadrature and a nodal coefficient, which is
exactly the finite difference scheme obtained from the Q1/Q2 spectral
element method.  In 2D the lumped quadrature makes the stiffness a sum of
1D line operators::

    S = sum_j wy_j * S_x(M[:, j])  +  sum_i wx_i * S_y(M[i, :])

so rows of ``W^-1 S`` are sums of the two axis stencils.  No ghost nodes
are stored; the homogeneous Neumann condition is built into the element
sums at the boundary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import Grid, QuadratureWeights, axis_weights, lumped_weights

__all__ = [
    "SparseOperator",
    "NonPositiveCoefficientError",
    "assemble_stiffness",
    "assemble_step_matrix",
    "assemble_helmholtz",
    "axis_helmholtz_matrix",
    "scaled_stiffness",
    "dump_triplets",
]

# Reference derivatives D[q, a] = phi_a'(xi_q) on [-1, 1] at the GL nodes,
# and reference GL weights.  Physical element length is 2h (Q2) or h (Q1).
_Q2_DERIV = np.array(
    [
        [-1.5, 2.0, -0.5],
        [-0.5, 0.0, 0.5],
        [0.5, -2.0, 1.5],
    ]
)
_Q2_WEIGHTS_INT = np.array([1.0, 4.0, 1.0])
_Q2_WEIGHTS = _Q2_WEIGHTS_INT / 3.0


class NonPositiveCoefficientError(ValueError):
    """A mobility value is not strictly positive."""

    def __init__(self, index, value):
        self.index = index
        self.value = value
        super().__init__(f"coefficient must be > 0, got {value!r} at node {index}")


@dataclass(frozen=True)
class SparseOperator:
    """CSR matrix plus the structural facts the solvers rely on."""

    matrix: sp.csr_matrix
    symmetric: bool = False
    null_vector: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ other

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def dump(self, path) -> None:
        dump_triplets(self.matrix, path)


def dump_triplets(matrix, path) -> None:
    """Write ``row col value`` lines (0-based, 17 significant digits)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")


def _check_coefficient(grid: Grid, coeff) -> np.ndarray:
    m = np.asarray(coeff, dtype=float)
    if m.shape != grid.shape:
        if m.size == grid.size:
            m = m.reshape(grid.shape)
        else:
            raise ValueError(f"coefficient shape {m.shape} does not match grid {grid.shape}")
    bad = ~(m > 0) | ~np.isfinite(m)
    if bad.any():
        idx = np.unravel_index(np.flatnonzero(bad)[0], grid.shape)
        idx = idx[0] if grid.dimension == 1 else idx
        raise NonPositiveCoefficientError(idx, m[idx])
    return m


def _line_element_entries(m: np.ndarray, h: float, order: int, raw: bool = False):
    """Element stiffness entries for a batch of 1D lines.

    ``m`` has shape (lines, n).  Returns (local row, local col, values) where
    values has shape (lines, cells, n_pairs) and rows/cols are node offsets
    relative to the first node of each cell.  Only a <= b is computed, the
    mirror entries reuse the same numbers so assembly is bitwise symmetric.

    With ``raw`` the common factor ``1/(2h)`` (Q1) or ``1/(3h)`` (Q2) is left
    out, so unit coefficients give exact small rationals.
    """
    if order == 1:
        k = m[:, :-1] + m[:, 1:]
        if not raw:
            k = k / (2.0 * h)
        a = np.array([0, 0, 1])
        b = np.array([0, 1, 1])
        vals = np.stack([k, -k, k], axis=-1)
        return a, b, vals
    # Q2: cells of three nodes starting at even indices.
    mq = np.stack([m[:, 0:-1:2], m[:, 1::2], m[:, 2::2]], axis=-1)  # (lines, cells, 3)
    wm = mq * _Q2_WEIGHTS_INT if raw else mq * _Q2_WEIGHTS / h
    pairs = [(a, b) for a in range(3) for b in range(a, 3)]
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    vals = np.stack([wm @ (_Q2_DERIV[:, i] * _Q2_DERIV[:, j]) for i, j in pairs], axis=-1)
    return a, b, vals


def _line_triplets(m: np.ndarray, h: float, order: int, scale: np.ndarray, raw: bool = False):
    """COO triplets (line index, i, j, value) of the 1D stiffness per line."""
    lines, n = m.shape
    a, b, vals = _line_element_entries(m, h, order, raw)
    cells = vals.shape[1]
    start = np.arange(cells) * order
    vals = vals * scale[:, None, None]
    rows = start[None, :, None] + a[None, None, :]
    cols = start[None, :, None] + b[None, None, :]
    rows = np.broadcast_to(rows, vals.shape)
    cols = np.broadcast_to(cols, vals.shape)
    line = np.broadcast_to(np.arange(lines)[:, None, None], vals.shape)
    off = a != b
    # mirror strictly upper entries
    r = np.concatenate([rows.ravel(), cols[..., off].ravel()])
    c = np.concatenate([cols.ravel(), rows[..., off].ravel()])
    v = np.concatenate([vals.ravel(), vals[..., off].ravel()])
    ln = np.concatenate([line.ravel(), line[..., off].ravel()])
    return ln, r, c, v


def _stiffness_csr(grid: Grid, m: np.ndarray) -> sp.csr_matrix:
    n = grid.n
    if grid.dimension == 1:
        ln, r, c, v = _line_triplets(m[None, :], grid.spacings[0], grid.order, np.ones(1))
        coo = sp.coo_matrix((v, (r, c)), shape=(n, n))
    else:
        hx, hy = grid.spacings
        wx = axis_weights(n, hx, grid.order)
        wy = axis_weights(n, hy, grid.order)
        # x-direction: lines are fixed j, nodes run over i -> flat i*n + j
        ln, r, c, v = _line_triplets(m.T, hx, grid.order, wy)
        rows_x = r * n + ln
        cols_x = c * n + ln
        vx = v
        # y-direction: lines are fixed i, nodes run over j
        ln, r, c, v = _line_triplets(m, hy, grid.order, wx)
        rows_y = ln * n + r
        cols_y = ln * n + c
        coo = sp.coo_matrix(
            (np.concatenate([vx, v]), (np.concatenate([rows_x, rows_y]), np.concatenate([cols_x, cols_y]))),
            shape=(n * n, n * n),
        )
    csr = coo.tocsr()
    csr.sum_duplicates()
    csr.sort_indices()
    return csr


def assemble_stiffness(grid: Grid, coeff) -> SparseOperator:
    """Stiffness matrix S of ``-div(M grad u)`` with homogeneous Neumann BC.

    The scheme's step system is ``W M + dt S``; ``W^-1 S`` reproduces the
    finite difference stencils (e.g. ``[1, -8, 14, -8, 1] / (4 h^2)`` at an
    interior Q2 cell end when ``M == 1``).

    Raises
    ------
    NonPositiveCoefficientError
        If any ``M_i <= 0`` (or is not finite).
    """
    m = _check_coefficient(grid, coeff)
    csr = _stiffness_csr(grid, m)
    return SparseOperator(csr, symmetric=True, null_vector=np.ones(grid.size))


def _weight_multiples(n: int, order: int) -> np.ndarray:
    """Axis weights in units of ``h/2`` (Q1) or ``h/3`` (Q2): small integers."""
    c = np.full(n, 2.0 if order == 1 else 4.0)
    if order == 2:
        c[2:-1:2] = 2.0
    c[[0, -1]] = 1.0
    return c


def scaled_stiffness(grid: Grid, coeff, weights: QuadratureWeights | None = None) -> sp.csr_matrix:
    """``W^-1 S`` as a CSR matrix (built on demand, never cached).

    With the default lumped weights each row of an axis operator is formed
    as ``raw / (c_i h^2)`` with integer ``c_i``, a single rounding, so unit
    coefficients reproduce ``K / h^2`` and ``H / h^2`` exactly whenever
    ``h^2`` is exact.
    """
    if weights is not None:
        s = assemble_stiffness(grid, coeff).matrix
        return (sp.diags(1.0 / weights.flat) @ s).tocsr()
    m = _check_coefficient(grid, coeff)
    n = grid.n
    parts = []
    for axis, h in enumerate(grid.spacings):
        div = _weight_multiples(n, grid.order) * h * h
        lines = m if grid.dimension == 1 else (m.T if axis == 0 else m)
        lines = lines[None, :] if grid.dimension == 1 else lines
        ln, r, c, v = _line_triplets(lines, h, grid.order, np.ones(lines.shape[0]), raw=True)
        v = v / div[r]
        if grid.dimension == 1:
            rows, cols = r, c
        elif axis == 0:
            rows, cols = r * n + ln, c * n + ln
        else:
            rows, cols = ln * n + r, ln * n + c
        parts.append((rows, cols, v))
    rows, cols, vals = (np.concatenate(x) for x in zip(*parts))
    out = sp.coo_matrix((vals, (rows, cols)), shape=(grid.size, grid.size)).tocsr()
    out.sum_duplicates()
    out.sort_indices()
    return out


def assemble_step_matrix(grid: Grid, weights: QuadratureWeights, coeff, dt: float) -> SparseOperator:
    """System matrix ``W M + dt S`` of one semi-implicit step (SPD)."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    m = _check_coefficient(grid, coeff)
    s = _stiffness_csr(grid, m)
    a = (dt * s + sp.diags(weights.flat * m.ravel())).tocsr()
    a.sort_indices()
    return SparseOperator(a, symmetric=True)


def axis_helmholtz_matrix(n: int, order: int) -> np.ndarray:
    """Dense K (order 1) or H (order 2): ``h^2 W^-1 S`` for ``M == 1``.

    Entries are exact small rationals, e.g. K rows ``[2, -2]`` and
    ``[-1, 2, -1]``; H rows ``[7/2, -4, 1/2]``, ``[-1, 2, -1]`` and
    ``[1/4, -2, 7/2, -2, 1/4]``.
    """
    if order == 1:
        if n < 2:
            raise ValueError("K needs at least 2 nodes")
        k = np.zeros((n, n))
        i = np.arange(1, n - 1)
        k[i, i - 1] = -1.0
        k[i, i] = 2.0
        k[i, i + 1] = -1.0
        k[0, :2] = [2.0, -2.0]
        k[-1, -2:] = [-2.0, 2.0]
        return k
    if n < 3 or n % 2 == 0:
        raise ValueError(f"H needs an odd node count >= 3, got {n}")
    hm = np.zeros((n, n))
    for i in range(1, n - 1, 2):
        hm[i, i - 1 : i + 2] = [-1.0, 2.0, -1.0]
    for i in range(2, n - 2, 2):
        hm[i, i - 2 : i + 3] = [0.25, -2.0, 3.5, -2.0, 0.25]
    hm[0, :3] = [3.5, -4.0, 0.5]
    hm[-1, -3:] = [0.5, -4.0, 3.5]
    return hm


def assemble_helmholtz(grid: Grid, alpha: float) -> SparseOperator:
    """Operator of the chemoattractant equation ``-Lap c + alpha c = rho``.

    1D: ``K / h^2 + alpha I`` (or H).  2D: Kronecker sum
    ``(K (+) K) / h^2 + alpha I`` on C-ordered ``(i, j)`` fields.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    mats = [sp.csr_matrix(axis_helmholtz_matrix(grid.n, grid.order) / h**2) for h in grid.spacings]
    if grid.dimension == 1:
        lap = mats[0]
    else:
        eye = sp.identity(grid.n, format="csr")
        lap = sp.kron(mats[0], eye) + sp.kron(eye, mats[1])
    op = (lap + alpha * sp.identity(grid.size)).tocsr()
    op.sort_indices()
    return SparseOperator(op, symmetric=False)
