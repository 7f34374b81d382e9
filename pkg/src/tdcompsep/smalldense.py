"""Dense linear algebra on small matrices.

Everything here works on matrices with at most a few hundred rows: the
Gram matrices of deflation pools, coarse operators ``Z^T A Z`` and the
``2 n_freq x 6`` mixing factors.  Symmetric eigenproblems are solved with
cyclic Jacobi sweeps in round-robin (parallel) ordering, so that each sweep
is a sequence of vectorized batches of disjoint plane rotations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NotPositiveDefinite, RankDeficient

PIVOT_TOL = 1e-12


@dataclass
class CholeskyFactor:
    """Lower-triangular factor with dropped (pivot-deficient) columns zeroed.

    ``L @ L.T`` reproduces the input; ``kept`` lists the columns with an
    accepted pivot, ``dropped`` the rest.
    """

    L: np.ndarray
    kept: np.ndarray
    dropped: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.kept)

    @property
    def reduced(self) -> np.ndarray:
        """Factor restricted to the kept rows and columns (invertible)."""
        return self.L[np.ix_(self.kept, self.kept)]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``F x = rhs`` on the kept index set; dropped entries of x are 0."""
        if len(self.dropped) == 0:
            y = solve_triangular(self.L, rhs, lower=True)
            return solve_triangular(self.L.T, y, lower=False)
        rhs = np.asarray(rhs)
        out = np.zeros_like(rhs, dtype=float)
        Lk = self.reduced
        y = solve_triangular(Lk, rhs[self.kept], lower=True)
        out[self.kept] = solve_triangular(Lk.T, y, lower=False)
        return out


@dataclass
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray

    def __len__(self):
        return len(self.values)


def _as_symmetric(a, name="matrix"):
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-12 * max(scale, np.finfo(float).tiny):
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def cholesky(f, drop_tol: float = PIVOT_TOL) -> CholeskyFactor:
    """Cholesky factorization in natural column order with column dropping.

    A column whose pivot falls below ``drop_tol * trace(F) / dim`` is
    dropped (its factor column is set to zero).  A pivot below the negative
    of that threshold means F is indefinite.
    """
    f = _as_symmetric(f, "F")
    n = f.shape[0]
    L = np.zeros_like(f)
    if n == 0:
        return CholeskyFactor(L, np.arange(0), np.arange(0))
    thresh = drop_tol * max(np.trace(f), 0.0) / n
    kept, dropped = [], []
    for j in range(n):
        d = f[j, j] - L[j, :j] @ L[j, :j]
        if d < -thresh:
            raise NotPositiveDefinite(f"negative pivot {d:.3e} at column {j}")
        if d <= thresh:
            dropped.append(j)
            continue
        piv = np.sqrt(d)
        L[j, j] = piv
        L[j + 1:, j] = (f[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / piv
        kept.append(j)
    return CholeskyFactor(L, np.array(kept, dtype=int), np.array(dropped, dtype=int))


def _round_robin(m: int):
    """Yield m-1 rounds of m/2 disjoint index pairs covering all pairs once."""
    players = list(range(m))
    for _ in range(m - 1):
        yield [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        players = [players[0], players[-1]] + players[1:-1]


def jacobi_eigh(a, tol: float = 1e-15, max_sweeps: int = 60) -> EigenPairs:
    """All eigenpairs of a symmetric matrix by cyclic Jacobi rotations.

    Eigenvalues are returned ascending; equal values keep the order of the
    diagonal position they converged to.
    """
    a = _as_symmetric(a, "A")
    n = a.shape[0]
    v = np.eye(n)
    if n <= 1:
        return EigenPairs(np.diag(a).copy(), v)

    m = n + (n % 2)
    rounds = []
    for pairs in _round_robin(m):
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        p = np.array([pq[0] for pq in pairs])
        q = np.array([pq[1] for pq in pairs])
        rounds.append((p, q))

    norm = np.linalg.norm(a)
    if norm == 0.0:
        return EigenPairs(np.zeros(n), v)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * norm:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.hypot(t, 1.0)
            s = t * c

            ap, aq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            ap, aq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0

            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return EigenPairs(w[order], v[:, order])


def solve_generalized_symmetric_eig(g, f, k: int | None = None,
                                    drop_tol: float = PIVOT_TOL) -> EigenPairs:
    """Smallest eigenpairs of the pencil ``G y = lambda F y``.

    F is reduced with :func:`cholesky`; columns with deficient pivots are
    removed from the problem, and the corresponding entries of the returned
    vectors are zero.  Vectors are F-orthonormal.
    """
    g = _as_symmetric(g, "G")
    fac = cholesky(f, drop_tol)
    if g.shape != fac.L.shape:
        raise ValueError("G and F must have the same shape")
    r = fac.rank
    if k is None:
        k = r
    if k > r:
        raise RankDeficient(f"effective rank of F is {r} < k = {k}")
    kept = fac.kept
    Lk = fac.reduced
    gk = g[np.ix_(kept, kept)]
    tmp = solve_triangular(Lk, gk, lower=True)
    c = solve_triangular(Lk, tmp.T, lower=True)
    c = 0.5 * (c + c.T)
    pairs = jacobi_eigh(c)
    yk = solve_triangular(Lk.T, pairs.vectors[:, :k], lower=False)
    y = np.zeros((g.shape[0], k))
    y[kept] = yk
    return EigenPairs(pairs.values[:k].copy(), y)


def pseudo_inverse_product(k_next, k_prev) -> np.ndarray:
    """Return ``(K_next^T K_next)^{-1} K_next^T K_prev``."""
    k_next = np.asarray(k_next, dtype=float)
    k_prev = np.asarray(k_prev, dtype=float)
    if k_next.shape != k_prev.shape:
        raise ValueError("K_next and K_prev must have the same shape")
    gram = k_next.T @ k_next
    try:
        fac = cholesky(gram)
    except NotPositiveDefinite as exc:
        raise RankDeficient(str(exc)) from exc
    if len(fac.dropped):
        raise RankDeficient("K_next does not have full column rank")
    return fac.solve(k_next.T @ k_prev)
