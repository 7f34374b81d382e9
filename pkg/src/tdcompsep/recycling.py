"""Deflation spaces for the next system of a sequence.

Ritz and harmonic-Ritz projections over a pool of recycled vectors, the
rotation augmentation that restores eigenvector pairs missed because of a
scan symmetry, and the analytic eigenvectors available when every channel
shares its scan and noise.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfiguration, RankDeficient
from .operators import N_CS, apply_rotation
from .smalldense import PIVOT_TOL, solve_generalized_symmetric_eig
from .solvers import DeflationSpace, RecycleHarvest

METHODS = ("ritz", "harmonic")


@dataclass
class RecyclePool:
    """Columns ``U = [Z, Z_harvested]`` with their products by A and B.

    ``AU`` comes from the operator the vectors were produced with.
    """

    U: np.ndarray
    AU: np.ndarray
    BU: np.ndarray

    def __post_init__(self):
        if not (self.U.shape == self.AU.shape == self.BU.shape):
            raise ValueError("U, AU and BU must have equal shapes")

    @property
    def size(self) -> int:
        return self.U.shape[1]

    @classmethod
    def from_solve(cls, space: DeflationSpace | None, harvest: RecycleHarvest, B) -> "RecyclePool":
        """Pool of the deflation vectors used in a solve plus its harvest."""
        parts_u, parts_au = [], []
        if space is not None and space.k:
            parts_u.append(space.Z)
            parts_au.append(space.AZ)
        if len(harvest):
            parts_u.append(harvest.directions)
            parts_au.append(harvest.Adirections)
        if not parts_u:
            n = harvest.directions.shape[0]
            empty = np.zeros((n, 0))
            return cls(empty, empty.copy(), empty.copy())
        U = np.concatenate(parts_u, axis=1)
        AU = np.concatenate(parts_au, axis=1)
        return cls(U, AU, B.apply_columns(U))


def _column_scaling(F):
    d = np.sqrt(np.clip(np.diag(F), 0.0, None))
    keep = d > 0
    scale = np.zeros_like(d)
    scale[keep] = 1.0 / d[keep]
    return scale


def _select(G, F, k, drop_tol):
    """Smallest ``k`` pairs of ``G y = lam F y`` after Jacobi scaling.

    Scaling makes the pivot-drop threshold insensitive to the norms of the
    pool columns, which shrink along with the CG residual.
    """
    s = _column_scaling(F)
    Fs = F * s[:, None] * s[None, :]
    Gs = G * s[:, None] * s[None, :]
    Fs = 0.5 * (Fs + Fs.T)
    Gs = 0.5 * (Gs + Gs.T)
    full = solve_generalized_symmetric_eig(Gs, Fs, None, drop_tol)
    rank = len(full.values)
    if rank < k:
        warnings.warn(f"recycle pool has rank {rank} < k = {k}; returning {rank} vectors",
                      RuntimeWarning, stacklevel=3)
        k = rank
    return full.values[:k], s[:, None] * full.vectors[:, :k]


def ritz_recycle(pool: RecyclePool, k: int, drop_tol: float = PIVOT_TOL) -> DeflationSpace:
    """Ritz vectors of ``B^{-1} A`` on ``span(U)`` for the ``k`` smallest Ritz values.

    The returned space carries ``A Z = AU Y``, valid for the operator the pool
    was built with, and charges no matvecs.
    """
    if pool.size == 0 or k < 1:
        raise RankDeficient("empty pool or nonpositive k")
    F = pool.U.T @ pool.BU
    G = pool.U.T @ pool.AU
    values, Y = _select(G, F, k, drop_tol)
    return DeflationSpace(pool.U @ Y, pool.AU @ Y, values)


def harmonic_ritz_recycle(pool: RecyclePool, k: int, B, drop_tol: float = PIVOT_TOL
                          ) -> DeflationSpace:
    """Harmonic Ritz vectors: ``(AU)^T B^{-1} (AU) w = theta (U^T A U) w``, smallest theta."""
    if pool.size == 0 or k < 1:
        raise RankDeficient("empty pool or nonpositive k")
    G = pool.U.T @ pool.AU
    H = pool.AU.T @ B.solve_columns(pool.AU)
    values, Y = _select(H, 0.5 * (G + G.T), k, drop_tol)
    return DeflationSpace(pool.U @ Y, pool.AU @ Y, values)


def recycle(pool: RecyclePool, k: int, method: str = "ritz", B=None,
            drop_tol: float = PIVOT_TOL) -> DeflationSpace:
    if method == "ritz":
        return ritz_recycle(pool, k, drop_tol)
    if method == "harmonic":
        if B is None:
            raise ValueError("harmonic Ritz needs the preconditioner")
        return harmonic_ritz_recycle(pool, k, B, drop_tol)
    raise ValueError(f"unknown recycling method {method!r}")


def _rotation_partners(Z, n_pix, pixel_map, max_size, tol):
    """Interleave ``[z1, R z1, z2, R z2, ...]``, skipping dependent rotations."""
    n, k = Z.shape
    limit = max_size if max_size is not None else 2 * k
    RZ = apply_rotation(Z.T, n_pix, pixel_map).T
    # span(Z) first, so a partner already present in Z is never appended
    basis, tri = np.linalg.qr(Z)
    diag = np.abs(np.diag(tri))
    basis = basis[:, diag > tol * diag.max(initial=0.0)]
    cols = []
    for i in range(k):
        if len(cols) >= limit:
            break
        cols.append((i, False))
        if len(cols) >= limit:
            break
        v = RZ[:, i]
        w = v - basis @ (basis.T @ v)
        w = w - basis @ (basis.T @ w)
        nw = np.linalg.norm(w)
        if nw <= tol * np.linalg.norm(v):
            continue
        basis = np.concatenate([basis, (w / nw)[:, None]], axis=1)
        cols.append((i, True))
    return cols, RZ


def augment_with_rotation(Z, n_pix: int, pixel_map=None, max_size: int | None = None,
                          tol: float = 1e-8):
    """Add the rotated partner ``R z`` of each deflation vector.

    ``pixel_map`` completes the rotation into the scan's symmetry (see
    :meth:`ScanPattern.symmetry_pixel_map`).  Partners already in the span
    are dropped.  ``max_size`` caps the result, keeping the leading pairs.
    For a :class:`DeflationSpace` the products are rotated along with the
    vectors, which is exact when the rotation commutes with A.
    """
    if isinstance(Z, DeflationSpace):
        cols, RZ = _rotation_partners(Z.Z, n_pix, pixel_map, max_size, tol)
        RAZ = apply_rotation(Z.AZ.T, n_pix, pixel_map).T

        def pick(a, ra):
            return np.stack([ra[:, i] if r else a[:, i] for i, r in cols], axis=1)
        values = None if Z.values is None else np.array([Z.values[i] for i, _ in cols])
        return DeflationSpace(pick(Z.Z, RZ), pick(Z.AZ, RAZ), values)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    cols, RZ = _rotation_partners(Z, n_pix, pixel_map, max_size, tol)
    return np.stack([RZ[:, i] if r else Z[:, i] for i, r in cols], axis=1)


def dense_mapmaking_pencil(mapmaker):
    """Dense ``(A_map, B_map)`` of one channel, shape ``(2 n_pix, 2 n_pix)`` each.

    Assembled column by column; meant for small patches.
    """
    n = mapmaker.n_pix
    eye = np.eye(2 * n).reshape(2 * n, 2, n)
    A = mapmaker.apply(eye).reshape(2 * n, 2 * n)
    blocks = mapmaker.diagonal_blocks()
    Bm = np.zeros((2, n, 2, n))
    idx = np.arange(n)
    for a in range(2):
        for c in range(2):
            Bm[a, idx, c, idx] = blocks[:, a, c]
    return 0.5 * (A + A.T), Bm.reshape(2 * n, 2 * n)


def _check_shared_channels(op):
    first = op.mapmakers[0]
    for mm in op.mapmakers[1:]:
        if not mm.scan.same_as(first.scan) or mm.noise != first.noise:
            raise InvalidConfiguration("triplet eigenvectors need identical scans and noise "
                                       "in every channel")


def construct_multiplicity_triplets(op, map_eigpairs=None, count: int | None = None):
    """Eigenvectors of ``B^{-1} A`` built from map-making eigenpairs.

    When every channel shares scan and noise, each pair ``(lam, v)`` of the
    one-channel pencil ``A_map v = lam B_map v`` yields three eigenvectors
    with eigenvalue ``lam``: ``v`` placed in the slot of one component.
    ``count`` keeps the pairs with the smallest ``lam``.  Returns a
    :class:`DeflationSpace` (``A Z`` formed with ``op``) with ``values``.
    """
    _check_shared_channels(op)
    n_pix = op.n_pix
    if map_eigpairs is None:
        Am, Bm = dense_mapmaking_pencil(op.mapmakers[0])
        map_eigpairs = solve_generalized_symmetric_eig(Am, Bm)
    values = np.asarray(map_eigpairs.values, dtype=float)
    V = np.asarray(map_eigpairs.vectors, dtype=float)
    if count is not None:
        values, V = values[:count], V[:, :count]
    m = V.shape[1]
    Z = np.zeros((N_CS, n_pix, 3, m))
    lam = np.repeat(values[None, :], 3, axis=0)
    for c in range(3):
        Z[2 * c:2 * c + 2, :, c, :] = V.reshape(2, n_pix, m)
    # order pairs by eigenvalue, the three members of a triplet adjacent
    Z = Z.reshape(N_CS * n_pix, 3, m).transpose(0, 2, 1).reshape(N_CS * n_pix, 3 * m)
    lam = lam.T.reshape(-1)
    return DeflationSpace.build(op, Z, lam)
