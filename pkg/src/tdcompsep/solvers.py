"""Preconditioned conjugate gradients with optional deflation.

Convergence is measured with the residual norm relative to the right-hand
side, ``||b - A x_j|| / ||b||``, and at least one iteration is always made
for a nonzero right-hand side.  The deflated solver follows the DEF1 two-level
scheme (deflation projector applied to the residual, block-diagonal
preconditioner as first level) and can alternatively run the A-DEF2 form
of the two-level preconditioner.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CoarseSingular, IndefiniteBreakdown, NotPositiveDefinite
from .smalldense import cholesky

DEFAULT_TOL = 1e-8
VARIANTS = ("def1", "adef2")


@dataclass
class SolveLog:
    """Convergence record of one solve.

    ``residual_history[0]`` is the initial relative residual; entry ``j`` is
    the recurrence residual after iteration ``j``.  ``matvecs_iteration``
    counts one product per iteration and ``matvecs_deflation`` the products
    with the deflation vectors at setup; the initial-residual and final
    true-residual products are tallied in ``matvecs_other``.
    """

    residual_history: list = field(default_factory=list)
    iterations: int = 0
    matvecs_iteration: int = 0
    matvecs_deflation: int = 0
    matvecs_other: int = 0
    wall_time: float = 0.0
    converged: bool = False
    true_residual: float = float("nan")
    zero_rhs: bool = False
    n_deflation: int = 0

    @property
    def matvecs_total(self) -> int:
        return self.matvecs_iteration + self.matvecs_deflation


@dataclass
class RecycleHarvest:
    """Projected search directions ``(I - QA) p_j`` and their products with A."""

    directions: np.ndarray
    Adirections: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "RecycleHarvest":
        return cls(np.zeros((n, 0)), np.zeros((n, 0)))

    def __len__(self):
        return self.directions.shape[1]


class DeflationSpace:
    """Deflation vectors Z with cached ``A Z`` and a factorized coarse matrix.

    Columns whose coarse pivot is deficient are dropped.  ``matvecs`` is the
    number of operator applications spent on ``A Z``.
    """

    def __init__(self, Z, AZ, values=None, matvecs: int = 0):
        Z = np.asarray(Z, dtype=float)
        AZ = np.asarray(AZ, dtype=float)
        if Z.ndim != 2 or Z.shape != AZ.shape:
            raise ValueError("Z and AZ must be arrays of equal shape (n, k)")
        self.matvecs = int(matvecs)
        self.values = None if values is None else np.asarray(values, dtype=float)
        if Z.shape[1] == 0:
            self.Z, self.AZ = Z, AZ
            self._fac = None
            return
        E = Z.T @ AZ
        E = 0.5 * (E + E.T)
        try:
            fac = cholesky(E)
        except NotPositiveDefinite as exc:
            raise CoarseSingular(str(exc)) from exc
        if fac.rank == 0:
            raise CoarseSingular("coarse matrix has rank 0")
        if len(fac.dropped):
            warnings.warn(f"dropping {len(fac.dropped)} dependent deflation vectors",
                          RuntimeWarning, stacklevel=2)
            keep = fac.kept
            Z, AZ = Z[:, keep], AZ[:, keep]
            if self.values is not None:
                self.values = self.values[keep]
            fac = cholesky(0.5 * (Z.T @ AZ + AZ.T @ Z))
        self.Z, self.AZ = Z, AZ
        self._fac = fac

    @classmethod
    def empty(cls, n: int) -> "DeflationSpace":
        return cls(np.zeros((n, 0)), np.zeros((n, 0)))

    @classmethod
    def build(cls, op, Z, values=None) -> "DeflationSpace":
        """Form ``A Z`` with the given operator (``k`` matvecs) and factorize."""
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        return cls(Z, op.apply_columns(Z), values, matvecs=Z.shape[1])

    def for_operator(self, op) -> "DeflationSpace":
        return DeflationSpace.build(op, self.Z, self.values)

    @property
    def k(self) -> int:
        return self.Z.shape[1]

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    def coarse_solve(self, y):
        return self._fac.solve(y)

    def Q(self, v):
        """``Z (Z^T A Z)^{-1} Z^T v``."""
        if self.k == 0:
            return np.zeros_like(v)
        return self.Z @ self.coarse_solve(self.Z.T @ v)

    def AQ(self, v):
        if self.k == 0:
            return np.zeros_like(v)
        return self.AZ @ self.coarse_solve(self.Z.T @ v)

    def QA(self, v):
        """``Q A v`` using the cached products (A symmetric)."""
        if self.k == 0:
            return np.zeros_like(v)
        return self.Z @ self.coarse_solve(self.AZ.T @ v)

    def project(self, v):
        """``(I - A Q) v``."""
        return v - self.AQ(v)

    def project_transpose(self, v):
        """``(I - Q A) v``."""
        return v - self.QA(v)


def _as_space(Z, n):
    if Z is None:
        return DeflationSpace.empty(n)
    return Z


def _zero_rhs_result(b, t0, space):
    log = SolveLog(residual_history=[], iterations=0, converged=True, true_residual=0.0,
                   zero_rhs=True, matvecs_deflation=space.matvecs if space else 0,
                   n_deflation=space.k if space else 0)
    log.wall_time = time.perf_counter() - t0
    return np.zeros_like(b), log


def pcg(A, B, b, x0=None, tol: float = DEFAULT_TOL, maxit: int = 500, callback=None):
    """Block-Jacobi preconditioned CG.

    ``A`` needs ``apply(x)``; ``B`` needs ``solve(r)`` applying the
    preconditioner inverse.  Returns ``(x, SolveLog)``.
    """
    if tol <= 0 or maxit < 1:
        raise ValueError("tol must be positive and maxit at least 1")
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return _zero_rhs_result(b, t0, None)
    log = SolveLog()
    if x0 is None or not np.any(x0):
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - A.apply(x)
        log.matvecs_other += 1
    log.residual_history.append(np.linalg.norm(r) / bnorm)
    z = B.solve(r)
    p = z.copy()
    rz = r @ z
    for j in range(maxit):
        if rz == 0.0:
            break
        w = A.apply(p)
        log.matvecs_iteration += 1
        pw = p @ w
        if pw <= 0.0:
            raise IndefiniteBreakdown(f"p^T A p = {pw:.3e} at iteration {j}")
        gamma = rz / pw
        x += gamma * p
        r -= gamma * w
        log.iterations = j + 1
        rel = np.linalg.norm(r) / bnorm
        log.residual_history.append(rel)
        if callback is not None:
            callback(j, x, r)
        if rel < tol:
            log.converged = True
            break
        z = B.solve(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    log.true_residual = np.linalg.norm(b - A.apply(x)) / bnorm
    log.matvecs_other += 1
    log.wall_time = time.perf_counter() - t0
    return x, log


def adef2_apply(B, space: DeflationSpace, r):
    """A-DEF2 preconditioner ``(I - QA) B^{-1} r + Q r``."""
    y = B.solve(r)
    if space is None or space.k == 0:
        return y
    return space.project_transpose(y) + space.Q(r)


def reorthogonalize_residual(Z, r):
    """``(I - Z (Z^T Z)^{-1} Z^T) r``."""
    Z = Z.Z if isinstance(Z, DeflationSpace) else np.asarray(Z, dtype=float)
    if Z.shape[1] == 0:
        return r
    fac = cholesky(Z.T @ Z)
    return r - Z @ fac.solve(Z.T @ r)


def deflated_pcg(A, B, b, x0=None, Z: DeflationSpace | None = None, dim_p: int = 0,
                 tol: float = DEFAULT_TOL, maxit: int = 500, variant: str = "def1",
                 reorthogonalize: bool = False, callback=None):
    """Deflated PCG; returns ``(x, RecycleHarvest, SolveLog)``.

    ``Z`` must be a :class:`DeflationSpace` built with the operator ``A``.
    The first ``dim_p`` projected search directions and their products with
    A are harvested for recycling.
    """
    if tol <= 0 or maxit < 1:
        raise ValueError("tol must be positive and maxit at least 1")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = b.size
    space = _as_space(Z, n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        x, log = _zero_rhs_result(b, t0, space)
        return x, RecycleHarvest.empty(n), log

    log = SolveLog(matvecs_deflation=space.matvecs, n_deflation=space.k)
    dirs, adirs = [], []
    nonzero_x0 = x0 is not None and np.any(x0)
    x = np.array(x0, dtype=float) if nonzero_x0 else np.zeros_like(b)

    if variant == "def1":
        if nonzero_x0:
            r = b - A.apply(x)
            log.matvecs_other += 1
        else:
            r = b.copy()
        r = space.project(r)
        precondition = B.solve
    else:
        # start from x0 = Q b + (I - QA) x0 so that Z^T r0 = 0
        x = space.Q(b) + space.project_transpose(x)
        if np.any(x):
            r = b - A.apply(x)
            log.matvecs_other += 1
        else:
            r = b.copy()
        def precondition(v):
            return adef2_apply(B, space, v)

    if reorthogonalize:
        r = reorthogonalize_residual(space, r)
    log.residual_history.append(np.linalg.norm(r) / bnorm)
    z = precondition(r)
    p = z.copy()
    rz = r @ z
    for j in range(maxit):
        if rz == 0.0:
            break
        Ap = A.apply(p)
        log.matvecs_iteration += 1
        w = space.project(Ap) if variant == "def1" else Ap
        if j < dim_p:
            dirs.append(space.project_transpose(p))
            adirs.append(w if variant == "def1" else space.project(Ap))
        pw = p @ w
        if pw <= 0.0:
            raise IndefiniteBreakdown(f"p^T A p = {pw:.3e} at iteration {j}")
        gamma = rz / pw
        x += gamma * p
        r -= gamma * w
        if reorthogonalize:
            r = reorthogonalize_residual(space, r)
        log.iterations = j + 1
        rel = np.linalg.norm(r) / bnorm
        log.residual_history.append(rel)
        if callback is not None:
            callback(j, x, r)
        if rel < tol:
            log.converged = True
            break
        z = precondition(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new

    if variant == "def1":
        x = space.Q(b) + space.project_transpose(x)
    log.true_residual = np.linalg.norm(b - A.apply(x)) / bnorm
    log.matvecs_other += 1
    log.wall_time = time.perf_counter() - t0
    if dirs:
        harvest = RecycleHarvest(np.stack(dirs, axis=1), np.stack(adirs, axis=1))
    else:
        harvest = RecycleHarvest.empty(n)
    return x, harvest, log
