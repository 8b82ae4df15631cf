"""Uniform Gauss-Lobatto grids for Q1 / Q2 finite differences.

For polynomial degree 1 or 2 the (k+1)-point Gauss-Lobatto nodes of a
uniform mesh form a uniform finite difference grid, so a grid is fully
described by its interval(s), the element degree and the cell count.

Node roles for degree 2 follow the 1-based parity convention: odd nodes
are cell ends, even nodes are cell centers.  Arrays here are 0-based, so
``is_cell_end[i]`` is true for even ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "QuadratureWeights",
    "make_grid",
    "lumped_weights",
    "axis_weights",
    "ROLE_KNOT",
    "ROLE_XEDGE",
    "ROLE_YEDGE",
    "ROLE_CENTER",
]

# 2D node roles. An "x-edge center" sits at the midpoint of an element edge
# parallel to the x axis (cell center in x, cell end in y).
ROLE_KNOT = "knot"
ROLE_XEDGE = "x-edge-center"
ROLE_YEDGE = "y-edge-center"
ROLE_CENTER = "cell-center"


@dataclass(frozen=True)
class Grid:
    """Immutable uniform grid on a box.

    Attributes
    ----------
    dimension : int
        1 or 2.
    order : int
        Element degree k (1 or 2).
    domain : tuple of (a, b) pairs, one per axis.
    cells_per_axis : int
    """

    dimension: int
    order: int
    domain: tuple[tuple[float, float], ...]
    cells_per_axis: int
    axes: tuple[np.ndarray, ...] = field(repr=False, compare=False)

    @property
    def n(self) -> int:
        """Nodes per axis."""
        return self.order * self.cells_per_axis + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dimension

    @property
    def size(self) -> int:
        return self.n**self.dimension

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple((b - a) / (self.n - 1) for a, b in self.domain)

    @property
    def h(self) -> float:
        """Common grid spacing; only defined when all axes agree."""
        hs = self.spacings
        if not np.allclose(hs, hs[0], rtol=1e-14, atol=0.0):
            raise ValueError(f"axis spacings differ: {hs}")
        return hs[0]

    @property
    def measure(self) -> float:
        return float(np.prod([b - a for a, b in self.domain]))

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays with ``indexing='ij'`` (first index is x)."""
        if self.dimension == 1:
            return (self.axes[0],)
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(x)`` or ``func(x, y)`` at every node."""
        return np.asarray(func(*self.mesh()), dtype=float) * np.ones(self.shape)

    @cached_property
    def is_cell_end(self) -> np.ndarray | None:
        """Per-axis cell-end flags (degree 2 only)."""
        if self.order != 2:
            return None
        flags = np.zeros(self.n, dtype=bool)
        flags[::2] = True
        flags.setflags(write=False)
        return flags

    @cached_property
    def is_boundary(self) -> np.ndarray:
        flags = np.zeros(self.n, dtype=bool)
        flags[[0, -1]] = True
        flags.setflags(write=False)
        return flags

    @cached_property
    def node_roles(self) -> np.ndarray | None:
        """Role of every node (degree 2 only).

        In 1D the entries are ``"end"`` / ``"center"``; in 2D they are the
        four tensor-product roles (``ROLE_*`` constants).
        """
        if self.order != 2:
            return None
        end = self.is_cell_end
        if self.dimension == 1:
            roles = np.where(end, "end", "center")
        else:
            ex, ey = np.meshgrid(end, end, indexing="ij")
            roles = np.empty(self.shape, dtype=object)
            roles[ex & ey] = ROLE_KNOT
            roles[~ex & ey] = ROLE_XEDGE
            roles[ex & ~ey] = ROLE_YEDGE
            roles[~ex & ~ey] = ROLE_CENTER
        roles.setflags(write=False)
        return roles


@dataclass(frozen=True)
class QuadratureWeights:
    """Lumped (diagonal) quadrature weights, one per node, in grid shape."""

    w: np.ndarray
    axis: tuple[np.ndarray, ...]

    @property
    def flat(self) -> np.ndarray:
        return self.w.ravel()

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.w * values))


def _as_domain(domain, dimension: int) -> tuple[tuple[float, float], ...]:
    arr = np.asarray(domain, dtype=float)
    if arr.shape == (2,):
        arr = np.tile(arr, (dimension, 1))
    if arr.shape != (dimension, 2):
        raise ValueError(f"domain must be (a, b) or {dimension} such pairs, got {domain!r}")
    if np.any(arr[:, 1] <= arr[:, 0]):
        raise ValueError(f"degenerate domain {domain!r}")
    return tuple((float(a), float(b)) for a, b in arr)


def make_grid(dimension: int, order: int, domain, cells_per_axis: int) -> Grid:
    """Build a uniform grid of ``cells_per_axis`` Q``order`` elements per axis.

    >>> make_grid(1, 2, (0.0, 2.0), 1).axes[0]
    array([0., 1., 2.])
    """
    if dimension not in (1, 2):
        raise ValueError(f"dimension must be 1 or 2, got {dimension}")
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if int(cells_per_axis) != cells_per_axis or cells_per_axis < 1:
        raise ValueError(f"cells_per_axis must be a positive integer, got {cells_per_axis}")
    cells = int(cells_per_axis)
    dom = _as_domain(domain, dimension)
    n = order * cells + 1
    axes = []
    for a, b in dom:
        x = a + (b - a) * np.arange(n) / (n - 1)
        x[-1] = b
        x.setflags(write=False)
        axes.append(x)
    return Grid(dimension, order, dom, cells, tuple(axes))


def axis_weights(n: int, h: float, order: int) -> np.ndarray:
    """Composite Gauss-Lobatto weights on one axis (trapezoid or Simpson)."""
    w = np.empty(n)
    if order == 1:
        w[:] = h
        w[[0, -1]] = h / 2
    else:
        w[1::2] = 4 * h / 3
        w[0::2] = 2 * h / 3
        w[[0, -1]] = h / 3
    return w


def lumped_weights(grid: Grid) -> QuadratureWeights:
    """Diagonal of the lumped mass matrix W."""
    axis = tuple(axis_weights(grid.n, h, grid.order) for h in grid.spacings)
    w = axis[0]
    for wa in axis[1:]:
        w = np.multiply.outer(w, wa)
    w = np.array(w)
    w.setflags(write=False)
    return QuadratureWeights(w, axis)
