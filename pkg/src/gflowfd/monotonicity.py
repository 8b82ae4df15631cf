"""Monotonicity certificates (``A^-1 >= 0``) for the step matrices.

Four routes, from cheapest to most expensive:

* row-sum M-matrix test (always passes for Q1),
* sufficient mesh / time-step constraints per Q2 cell,
* Lorenz's condition: split the negative off-diagonal part
  ``A_a^- = A^z + A^s`` and check ``A_a^+ <= A^z A_d^-1 A^s`` entrywise,
* a dense inverse, for desk-scale matrices.

The Q2 checks act on ``A = W^-1 S + M / dt``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import SparseOperator, assemble_step_matrix
from .grid import Grid, QuadratureWeights, lumped_weights

__all__ = [
    "CertificateReport",
    "LorenzSplit",
    "scheme_matrix",
    "check_mmatrix_rowsum",
    "lorenz_split",
    "check_lorenz_sharp",
    "check_mesh_constraint",
    "verify_monotone_dense",
    "certify_step",
    "sharp_closed_form_1d",
    "sharp_closed_form_2d",
    "DENSE_CAP",
]

DENSE_CAP = 4096
STRICT_SLACK = 1e-14


@dataclass
class CertificateReport:
    method: str
    verdict: bool
    worst_margin: float | None = None
    worst_index: list | None = None
    failing: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.verdict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


def _csr(a) -> sp.csr_matrix:
    if isinstance(a, SparseOperator):
        a = a.matrix
    a = sp.csr_matrix(a, dtype=float)
    a.sum_duplicates()
    a.sort_indices()
    return a


def _node_index(grid: Grid, flat):
    return np.unravel_index(flat, grid.shape)


def _index_list(grid: Grid, flat) -> list:
    if grid is None or grid.dimension == 1:
        return [int(i) for i in np.atleast_1d(flat)]
    ii, jj = _node_index(grid, np.atleast_1d(flat))
    return [[int(a), int(b)] for a, b in zip(ii, jj)]


def scheme_matrix(grid: Grid, coeff, dt: float, weights: QuadratureWeights | None = None, step_matrix=None):
    """``W^-1 S + M / dt`` as CSR (row scaling of the step matrix)."""
    weights = weights or lumped_weights(grid)
    if step_matrix is None:
        step_matrix = assemble_step_matrix(grid, weights, coeff, dt)
    return (sp.diags(1.0 / (dt * weights.flat)) @ _csr(step_matrix)).tocsr()


# -- row sums ---------------------------------------------------------------


def check_mmatrix_rowsum(a) -> CertificateReport:
    """Positive diagonal, nonpositive off-diagonal, row sums >= 0 with one > 0."""
    a = _csr(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    diag = a.diagonal()
    off = a - sp.diags(diag)
    off.eliminate_zeros()
    rows = a.sum(axis=1).A1 if hasattr(a.sum(axis=1), "A1") else np.asarray(a.sum(axis=1)).ravel()
    scale = np.abs(a).sum(axis=1)
    scale = np.asarray(scale).ravel()
    pos_off = off.data > 0
    # row sums of exactly-zero-sum rows carry roundoff; treat |sum| <= eps*scale as 0
    tol = 64 * np.finfo(float).eps * scale
    rowsum_ok = rows >= -tol
    details = {
        "min_diagonal": float(diag.min()) if diag.size else 0.0,
        "max_offdiagonal": float(off.data.max()) if off.nnz else 0.0,
        "min_row_sum": float(rows.min()),
        "max_row_sum": float(rows.max()),
        "positive_offdiagonals": int(pos_off.sum()),
    }
    failing = []
    if pos_off.any():
        coo = off.tocoo()
        failing = [[int(r), int(c)] for r, c in zip(coo.row[pos_off], coo.col[pos_off])][:50]
    failing += [int(i) for i in np.flatnonzero(~rowsum_ok)[:50]]
    verdict = bool(np.all(diag > 0) and not pos_off.any() and rowsum_ok.all() and np.any(rows > tol))
    return CertificateReport("row-sum M-matrix", verdict, float(rows.min()), None, failing, details)


# -- Lorenz split -------------------------------------------------------------


@dataclass
class LorenzSplit:
    """``A = A_d + A_a_plus + A_z + A_s`` with ``A_z, A_s <= 0``."""

    A: sp.csr_matrix
    A_d: sp.csr_matrix
    A_a_plus: sp.csr_matrix
    A_z: sp.csr_matrix
    A_s: sp.csr_matrix
    grid: Grid
    coeff: np.ndarray
    dt: float

    def reconstruct(self) -> sp.csr_matrix:
        return (self.A_d + self.A_a_plus + self.A_z + self.A_s).tocsr()


def _axis_offsets(grid: Grid, rows, cols):
    """Axis (0 = x, 1 = y) and signed offset of each coupling along it."""
    if grid.dimension == 1:
        return np.zeros(rows.size, dtype=int), cols - rows, rows
    n = grid.n
    ri, rj = np.divmod(rows, n)
    ci, cj = np.divmod(cols, n)
    same_j = rj == cj
    axis = np.where(same_j, 0, 1)
    offset = np.where(same_j, ci - ri, cj - rj)
    row_pos = np.where(same_j, ri, rj)
    if np.any(~same_j & (ri != ci)):
        raise ValueError("matrix has couplings off the grid lines")
    return axis, offset, row_pos


def lorenz_split(a, grid: Grid, coeff, dt: float) -> LorenzSplit:
    """Split the Q2 scheme matrix for Lorenz's condition.

    Along an axis where the row node is a cell end, the positive part of
    the ``+-2`` coupling goes to ``A_a^+`` and is moved from ``A^z`` to
    ``A^s`` at the ``+-1`` coupling on the same side; along an axis where the
    row node is a cell center all couplings go to ``A^s``.  ``A^z`` is zero
    on cell-center rows.

    ``a`` may be None, in which case ``W^-1 S + M / dt`` is assembled.
    """
    if grid.order != 2:
        raise ValueError("Lorenz split applies to the Q2 scheme only; use the row-sum test for Q1")
    m = np.asarray(coeff, dtype=float).reshape(grid.shape)
    if a is None:
        a = scheme_matrix(grid, m, dt)
    a = _csr(a)
    if a.shape != (grid.size, grid.size):
        raise ValueError(f"matrix shape {a.shape} does not match grid with {grid.size} nodes")
    coo = a.tocoo()
    diag_mask = coo.row == coo.col
    rows, cols, vals = coo.row[~diag_mask], coo.col[~diag_mask], coo.data[~diag_mask]
    axis, offset, row_pos = _axis_offsets(grid, rows, cols)
    end_along = grid.is_cell_end[row_pos]

    far = end_along & (np.abs(offset) == 2)
    near_end = end_along & (np.abs(offset) == 1)
    other = ~(far | near_end)

    plus = np.where(far, np.maximum(vals, 0.0), 0.0)
    z = np.where(far, np.minimum(vals, 0.0), 0.0)
    s = np.zeros_like(vals)
    # unexpected positive couplings outside the +-2 pattern land in A_a^+ too
    plus = np.where(other, np.maximum(vals, 0.0), plus)
    s = np.where(other, np.minimum(vals, 0.0), s)

    # positive part of the +-2 coupling on the same side, looked up per near entry
    if grid.dimension == 1:
        step_flat = 1
        stride = np.ones_like(rows)
    else:
        stride = np.where(axis == 0, grid.n, 1)
        step_flat = None
    idx = np.flatnonzero(near_end)
    if idx.size:
        stride_near = stride[idx] if step_flat is None else np.full(idx.size, step_flat)
        target = rows[idx] + 2 * np.sign(offset[idx]) * stride_near
        valid = (target >= 0) & (target < a.shape[0])
        two = np.zeros(idx.size)
        if valid.any():
            two[valid] = np.asarray(a[rows[idx][valid], target[valid]]).ravel()
        # a +-2 lookup that wraps onto another grid line is not a coupling
        if grid.dimension == 2:
            n = grid.n
            same_line = np.where(axis[idx] == 0, (target % n) == (rows[idx] % n), (target // n) == (rows[idx] // n))
            two = np.where(same_line, two, 0.0)
        ap = np.maximum(two, 0.0)
        zn = vals[idx] + ap
        z[idx] = zn
        s[idx] = vals[idx] - zn  # exact when it matters; A_z + A_s == A up to one rounding

    shape = a.shape

    def build(v):
        keep = v != 0
        out = sp.csr_matrix((v[keep], (rows[keep], cols[keep])), shape=shape)
        out.sort_indices()
        return out

    a_d = sp.diags(a.diagonal()).tocsr()
    return LorenzSplit(a, a_d, build(plus), build(z), build(s), grid, m, float(dt))


def sharp_closed_form_1d(coeff, h: float, dt: float) -> np.ndarray:
    """Per-cell-center margins of the 1D sharp inequality, both orientations.

    Returns shape (cells, 2): ``lhs - rhs`` of
    ``(3 M_l + M_r)(M_l + 4 M_c + 9 M_r) > 4 (M_l + M_r + r M_c) q``
    (and its mirror), ``r = h^2/dt``, ``q = 3 M_l - 4 M_c + 3 M_r``; cells
    with ``q <= 0`` get ``+inf``.
    """
    m = np.asarray(coeff, dtype=float)
    ml, mc, mr = m[0:-1:2], m[1::2], m[2::2]
    r = h * h / dt
    q = 3 * ml - 4 * mc + 3 * mr
    rhs = 4 * (ml + mr + r * mc) * q
    left = (3 * ml + mr) * (ml + 4 * mc + 9 * mr) - rhs
    right = (ml + 3 * mr) * (9 * ml + 4 * mc + mr) - rhs
    out = np.stack([left, right], axis=-1)
    out[q <= 0] = np.inf
    return out


def _pad_reflect(m: np.ndarray) -> np.ndarray:
    """Ghost values M_{-k} := M_k on every side (two layers)."""
    return np.pad(m, 2, mode="reflect")


def sharp_closed_form_2d(coeff, h: float, dt: float) -> dict:
    """Margins of the 2D per-node sharp inequalities (both orientations).

    Keys: ``"cell-center-x"``, ``"cell-center-y"``, ``"x-edge"``,
    ``"y-edge"``, each an array ``lhs - rhs`` (``+inf`` where the coupling is
    nonpositive) at the nodes of that role.
    """
    m = np.asarray(coeff, dtype=float)
    r = h * h / dt
    p = _pad_reflect(m)
    n = m.shape[0]

    def at(di, dj, ii, jj):
        return p[ii + 2 + di, jj + 2 + dj]

    ends = np.arange(0, n, 2)
    centers = np.arange(1, n, 2)
    out = {}

    def along_x(ii, jj, denom):
        ml, mc, mr = at(-1, 0, ii, jj), at(0, 0, ii, jj), at(1, 0, ii, jj)
        q = 3 * ml - 4 * mc + 3 * mr
        num_l = (ml + 4 * mc + 9 * mr) * (3 * ml + mr)
        num_r = (9 * ml + 4 * mc + mr) * (ml + 3 * mr)
        res = np.stack([num_l / denom - q, num_r / denom - q], axis=-1)
        res[q <= 0] = np.inf
        return res

    def along_y(ii, jj, denom):
        ml, mc, mr = at(0, -1, ii, jj), at(0, 0, ii, jj), at(0, 1, ii, jj)
        q = 3 * ml - 4 * mc + 3 * mr
        num_l = (ml + 4 * mc + 9 * mr) * (3 * ml + mr)
        num_r = (9 * ml + 4 * mc + mr) * (ml + 3 * mr)
        res = np.stack([num_l / denom - q, num_r / denom - q], axis=-1)
        res[q <= 0] = np.inf
        return res

    # cell centers: neighbours in x and y are all cell-center stencils
    ii, jj = np.meshgrid(centers, centers, indexing="ij")
    d = 4 * (at(-1, 0, ii, jj) + at(1, 0, ii, jj) + at(0, -1, ii, jj) + at(0, 1, ii, jj) + r * at(0, 0, ii, jj))
    out["cell-center-x"] = along_x(ii, jj, d)
    out["cell-center-y"] = along_y(ii, jj, d)

    # x-edge centers (center in x, end in y): the y direction carries the 5-point sum
    ii, jj = np.meshgrid(centers, ends, indexing="ij")
    five = at(0, -2, ii, jj) + 4 * at(0, -1, ii, jj) + 18 * at(0, 0, ii, jj) + 4 * at(0, 1, ii, jj) + at(0, 2, ii, jj)
    d = (five + 8 * (at(-1, 0, ii, jj) + at(1, 0, ii, jj)) + 8 * r * at(0, 0, ii, jj)) / 2
    out["x-edge"] = along_x(ii, jj, d)

    ii, jj = np.meshgrid(ends, centers, indexing="ij")
    five = at(-2, 0, ii, jj) + 4 * at(-1, 0, ii, jj) + 18 * at(0, 0, ii, jj) + 4 * at(1, 0, ii, jj) + at(2, 0, ii, jj)
    d = (five + 8 * (at(0, -1, ii, jj) + at(0, 1, ii, jj)) + 8 * r * at(0, 0, ii, jj)) / 2
    out["y-edge"] = along_y(ii, jj, d)
    return out


def check_lorenz_sharp(split: LorenzSplit) -> CertificateReport:
    """Lorenz's condition on the assembled split, entry by entry.

    Passes iff ``(A_d + A^z) 1 >= 0`` with a positive entry and every
    positive off-diagonal entry is dominated by ``A^z A_d^-1 A^s``.  The
    closed-form per-cell inequalities are evaluated alongside for cross
    checking (``details["closed_form_verdict"]``).
    """
    grid = split.grid
    dz1 = (split.A_d + split.A_z) @ np.ones(split.A.shape[0])
    scale = np.abs(split.A).sum(axis=1)
    scale = np.asarray(scale).ravel()
    cond1 = bool(np.all(dz1 >= -64 * np.finfo(float).eps * scale) and np.any(dz1 > 0))

    prod = (split.A_z @ sp.diags(1.0 / split.A_d.diagonal()) @ split.A_s).tocsr()
    plus = split.A_a_plus.tocoo()
    bound = np.asarray(prod[plus.row, plus.col]).ravel() if plus.nnz else np.zeros(0)
    denom = np.maximum(np.abs(bound), plus.data) if plus.nnz else np.zeros(0)
    margin = (bound - plus.data) / denom if plus.nnz else np.zeros(0)
    ok = margin >= -STRICT_SLACK
    cond2 = bool(ok.all())

    details = {
        "row_condition": cond1,
        "min_row_sum_dz": float(dz1.min()),
        "positive_offdiagonals": int(plus.nnz),
    }
    worst_margin = None
    worst_index = None
    failing = []
    if plus.nnz:
        k = int(np.argmin(margin))
        worst_margin = float(margin[k])
        worst_index = [_index_list(grid, plus.row[k])[0], _index_list(grid, plus.col[k])[0]]
        bad = np.flatnonzero(~ok)
        failing = [_index_list(grid, plus.row[b])[0] for b in bad[:100]]
        details["failing_count"] = int(bad.size)

    h = grid.h
    if grid.dimension == 1:
        cf = sharp_closed_form_1d(split.coeff, h, split.dt)
        details["closed_form_min"] = float(cf.min()) if cf.size else float("inf")
        details["closed_form_verdict"] = bool(np.all(cf > 0))
    else:
        cf = sharp_closed_form_2d(split.coeff, h, split.dt)
        mins = {k: float(v.min()) if v.size else float("inf") for k, v in cf.items()}
        details["closed_form_min"] = mins
        details["closed_form_verdict"] = bool(all(v > 0 for v in mins.values()))
    return CertificateReport("Lorenz sharp", cond1 and cond2, worst_margin, worst_index, failing, details)


# -- mesh constraint ------------------------------------------------------------


def _constraint_rhs(mx, mn):
    return 7.0 * mn * mn / (mx * (3.0 * mx - 2.0 * mn))


def check_mesh_constraint(grid: Grid, coeff, dt: float) -> CertificateReport:
    """Sufficient per-cell constraint ``c0 + h^2/dt < 7 min^2 / (max (3 max - 2 min))``.

    ``c0 = 2`` in 1D (per cell), ``11/2`` in 2D (per edge center over the
    two adjacent cells).  The report lists failing cells / edge centers and
    the smallest admissible ``dt`` (``inf`` if no ``dt`` works).
    """
    if grid.order != 2:
        raise ValueError("mesh constraint applies to the Q2 scheme")
    m = np.asarray(coeff, dtype=float).reshape(grid.shape)
    h = grid.h
    r = h * h / dt
    if grid.dimension == 1:
        c0 = 2.0
        blocks = np.stack([m[0:-1:2], m[1::2], m[2::2]], axis=-1)
        mx, mn = blocks.max(axis=-1), blocks.min(axis=-1)
        where = [int(i) for i in range(1, grid.n, 2)]
    else:
        c0 = 5.5
        n = grid.n
        mx_list, mn_list, where = [], [], []
        for i in range(n):
            for j in range(n):
                ei, ej = i % 2 == 0, j % 2 == 0
                if ei == ej:
                    continue  # knots and cell centers carry no constraint
                if not ei:  # x-edge: [x_{i-1}, x_{i+1}] x [y_{j-2}, y_{j+2}]
                    blk = m[i - 1 : i + 2, max(j - 2, 0) : j + 3]
                else:  # y-edge
                    blk = m[max(i - 2, 0) : i + 3, j - 1 : j + 2]
                mx_list.append(blk.max())
                mn_list.append(blk.min())
                where.append([i, j])
        mx, mn = np.array(mx_list), np.array(mn_list)
    rhs = _constraint_rhs(mx, mn)
    lhs = c0 + r
    ok = lhs < rhs * (1.0 - STRICT_SLACK)
    margin = rhs - lhs
    gap = rhs - c0
    with np.errstate(divide="ignore"):
        dt_min = np.where(gap > 0, h * h / np.where(gap > 0, gap, 1.0), np.inf)
    k = int(np.argmin(margin))
    failing = [where[i] for i in np.flatnonzero(~ok)[:200]]
    details = {
        "lhs": float(lhs),
        "min_rhs": float(rhs.min()),
        "dt_lower_bound": float(dt_min.max()),
        "failing_count": int((~ok).sum()),
        "checked": int(ok.size),
    }
    return CertificateReport("Lorenz sufficient", bool(ok.all()), float(margin[k]), where[k], failing, details)


# -- dense oracle ------------------------------------------------------------------


def verify_monotone_dense(a, cap: int = DENSE_CAP) -> CertificateReport:
    """Invert densely and check ``min(A^-1) >= -1e-12 max|A^-1|``."""
    a = _csr(a) if sp.issparse(a) or isinstance(a, SparseOperator) else np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > cap:
        raise ValueError(f"dimension {n} exceeds dense cap {cap}")
    dense = a.toarray() if sp.issparse(a) else a
    inv = np.linalg.inv(dense)  # raises LinAlgError when singular
    if not np.all(np.isfinite(inv)):
        raise np.linalg.LinAlgError("inverse is not finite")
    big = float(np.abs(inv).max())
    lo = float(inv.min())
    ok = lo >= -1e-12 * big
    idx = np.unravel_index(int(np.argmin(inv)), inv.shape)
    neg = np.argwhere(inv < -1e-12 * big)[:100].tolist()
    return CertificateReport(
        "dense oracle",
        bool(ok),
        lo / big if big else 0.0,
        [int(idx[0]), int(idx[1])],
        neg,
        {"min_entry": lo, "max_abs_entry": big},
    )


def certify_step(grid: Grid, coeff, dt: float, step_matrix=None, weights=None) -> bool:
    """True if any cheap certificate proves the step matrix monotone."""
    if grid.order == 1:
        if step_matrix is None:
            step_matrix = assemble_step_matrix(grid, weights or lumped_weights(grid), coeff, dt)
        return check_mmatrix_rowsum(step_matrix).verdict
    if check_mesh_constraint(grid, coeff, dt).verdict:
        return True
    a = scheme_matrix(grid, coeff, dt, weights, step_matrix)
    return check_lorenz_sharp(lorenz_split(a, grid, coeff, dt)).verdict
