"""PCG and tensor-product eigen solvers.

The constant-coefficient operators on a uniform GL grid are separable:
per axis ``T = W^-1 S_1`` (``K / h^2`` or ``H / h^2``) is similar to the
symmetric ``W^1/2 T W^-1/2``, so one symmetric eigendecomposition per axis
inverts both the Helmholtz operator of the chemoattractant equation and the
Laplacian preconditioner of the step system with dense per-axis transforms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .assembly import SparseOperator, axis_helmholtz_matrix
from .grid import Grid, QuadratureWeights, axis_weights

__all__ = [
    "EigenFactorization",
    "SolveReport",
    "ConvergenceError",
    "LaplacianPreconditioner",
    "TensorEigenSolver",
    "axis_factorization",
    "pcg_solve",
    "build_laplacian_preconditioner",
    "helmholtz_solve",
    "DEFAULT_PCG_TOL",
]

DEFAULT_PCG_TOL = 1e-12


@dataclass(frozen=True)
class EigenFactorization:
    """``T = V diag(lam) V^-1`` for one axis operator ``T = K/h^2`` or ``H/h^2``."""

    V: np.ndarray
    Vinv: np.ndarray
    lam: np.ndarray
    tag: tuple  # (name, n, h)

    def reconstruct(self) -> np.ndarray:
        return (self.V * self.lam) @ self.Vinv


@lru_cache(maxsize=32)
def axis_factorization(n: int, h: float, order: int) -> EigenFactorization:
    """Eigendecomposition of the 1D constant-coefficient operator, cached per grid."""
    t = axis_helmholtz_matrix(n, order) / h**2
    w = axis_weights(n, h, order)
    sw = np.sqrt(w)
    sym = (sw[:, None] * t) / sw[None, :]
    sym = 0.5 * (sym + sym.T)  # exact up to roundoff; removes asymmetry noise
    lam, q = np.linalg.eigh(sym)
    if lam.min() < -1e-12 * max(1.0, lam.max()):
        raise np.linalg.LinAlgError(f"axis operator has negative eigenvalue {lam.min()}")
    lam = np.maximum(lam, 0.0)
    v = q / sw[:, None]
    vinv = q.T * sw[None, :]
    for arr in (v, vinv, lam):
        arr.setflags(write=False)
    return EigenFactorization(v, vinv, lam, ("K" if order == 1 else "H", n, h))


class TensorEigenSolver:
    """Solve ``(shift + scale * (T_x (+) T_y)) u = f`` on a 1D/2D grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.factors = tuple(axis_factorization(grid.n, h, grid.order) for h in grid.spacings)

    def spectrum(self) -> np.ndarray:
        lams = [f.lam for f in self.factors]
        if self.grid.dimension == 1:
            return lams[0]
        return lams[0][:, None] + lams[1][None, :]

    def solve(self, rhs: np.ndarray, shift: float, scale: float = 1.0, spectrum=None) -> np.ndarray:
        f = np.asarray(rhs, dtype=float).reshape(self.grid.shape)
        lam = self.spectrum() if spectrum is None else spectrum
        if self.grid.dimension == 1:
            (fx,) = self.factors
            return fx.V @ ((fx.Vinv @ f) / (shift + scale * lam))
        fx, fy = self.factors
        hat = fx.Vinv @ f @ fy.Vinv.T
        hat /= shift + scale * lam
        return fx.V @ hat @ fy.V.T


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)


class ConvergenceError(RuntimeError):
    """PCG did not reach the requested tolerance; carries the best iterate."""

    def __init__(self, x: np.ndarray, report: SolveReport):
        self.x = x
        self.report = report
        super().__init__(
            f"PCG not converged after {report.iterations} iterations "
            f"(relative residual {report.residual:.3e})"
        )


def _matvec(a):
    if isinstance(a, SparseOperator):
        a = a.matrix
    if sp.issparse(a) or isinstance(a, np.ndarray):
        return lambda v: a @ v
    return a


def pcg_solve(a, b, preconditioner=None, tol: float = DEFAULT_PCG_TOL, max_iter: int | None = None, x0=None):
    """Preconditioned conjugate gradients for SPD ``a``.

    Parameters
    ----------
    a : SparseOperator, sparse matrix, ndarray or callable
    b : array
    preconditioner : callable, optional
        Applies an approximation of ``a^-1``.
    tol : float
        Relative residual target ``||b - a x|| / ||b||``.

    Returns
    -------
    x, SolveReport

    Raises
    ------
    ConvergenceError
        When ``max_iter`` iterations do not reach ``tol``; ``err.x`` is the
        last iterate.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    matvec = _matvec(a)
    b = np.asarray(b, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = max(10 * n, 10)
    prec = preconditioner or (lambda r: r)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True, [0.0])

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - matvec(x)
    history = [np.linalg.norm(r) / bnorm]
    it = 0
    # outer loop restarts from the true residual if the recursive one drifted
    for _ in range(4):
        if history[-1] <= tol:
            break
        z = prec(r)
        p = z.copy()
        rz = r @ z
        while it < max_iter:
            ap = matvec(p)
            pap = p @ ap
            if pap <= 0:
                break
            alpha = rz / pap
            x += alpha * p
            r -= alpha * ap
            it += 1
            rel = np.linalg.norm(r) / bnorm
            history.append(rel)
            if rel <= tol:
                break
            z = prec(r)
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        r = b - matvec(x)
        history[-1] = np.linalg.norm(r) / bnorm
        if it >= max_iter:
            break
    report = SolveReport(it, history[-1], history[-1] <= tol, history)
    if not report.converged:
        raise ConvergenceError(x, report)
    return x, report


class LaplacianPreconditioner:
    """Exact inverse of ``mean_coeff W + dt S_1`` via per-axis eigenvectors.

    With ``coeff`` given the inverse is wrapped in the symmetric diagonal
    scaling ``D^-1/2 (.) D^-1/2``, ``D = coeff / mean_coeff``, which tracks
    strongly varying mobilities much better than the plain Laplacian.
    """

    def __init__(self, grid: Grid, weights: QuadratureWeights, dt: float, mean_coeff: float, coeff=None):
        if not dt > 0:
            raise ValueError("dt must be positive")
        if not mean_coeff > 0:
            raise ValueError("mean_coeff must be positive")
        self.grid = grid
        self.dt = dt
        self.mean_coeff = mean_coeff
        self._solver = TensorEigenSolver(grid)
        self._spectrum = self._solver.spectrum()
        self._winv = 1.0 / weights.w
        if coeff is None:
            self._dscale = None
        else:
            d = np.asarray(coeff, dtype=float).reshape(grid.shape) / mean_coeff
            self._dscale = 1.0 / np.sqrt(d)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        f = np.asarray(r, dtype=float).reshape(self.grid.shape)
        if self._dscale is not None:
            f = f * self._dscale
        u = self._solver.solve(f * self._winv, self.mean_coeff, self.dt, self._spectrum)
        if self._dscale is not None:
            u = u * self._dscale
        return u.ravel()


def build_laplacian_preconditioner(grid: Grid, weights: QuadratureWeights, dt: float, mean_coeff: float, coeff=None):
    """Preconditioner applying ``(mean_coeff W + dt S_1)^-1`` (see :class:`LaplacianPreconditioner`)."""
    return LaplacianPreconditioner(grid, weights, dt, mean_coeff, coeff)


def helmholtz_solve(grid: Grid, alpha: float, rho) -> np.ndarray:
    """Solve ``-Lap_h c + alpha c = rho`` (homogeneous Neumann), returns grid-shaped c."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    rho = np.asarray(rho, dtype=float)
    if rho.size != grid.size:
        raise ValueError(f"rho has {rho.size} values, grid has {grid.size} nodes")
    return TensorEigenSolver(grid).solve(rho, alpha)
