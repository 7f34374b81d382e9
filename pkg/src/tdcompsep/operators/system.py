"""The component-separation system operator and its block-diagonal preconditioner.

Vectors of unknowns use the component-wise layout: six consecutive maps
(cmb_q, cmb_u, dust_q, dust_u, sync_q, sync_u) of ``n_pix`` entries each,
flattened to length ``6 n_pix``.  Functions accept a single vector or a
stack of vectors along leading axes.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidConfiguration, SingularBlock
from .mixing import N_CS, MixingCoefficients, mix, mix_transpose
from .noise import NoiseModel, apply_noise_inverse
from .pointing import ScanPattern, apply_pointing, apply_pointing_transpose


@dataclass(frozen=True)
class MapMakingOperator:
    """The beta-independent per-channel operator ``P^T N^{-1} P``."""

    scan: ScanPattern
    noise: NoiseModel

    def __post_init__(self):
        if self.scan.n_samples % self.noise.block_length:
            raise InvalidConfiguration("scan length must be a multiple of the noise block length")

    @property
    def n_pix(self) -> int:
        return self.scan.n_pix

    def apply(self, maps: np.ndarray) -> np.ndarray:
        t = apply_pointing(self.scan, maps)
        return apply_pointing_transpose(self.scan, apply_noise_inverse(self.noise, t))

    def weighted_data(self, data: np.ndarray) -> np.ndarray:
        """``P^T N^{-1} d`` for one channel's time stream."""
        return apply_pointing_transpose(self.scan, apply_noise_inverse(self.noise, data))

    def diagonal_blocks(self) -> np.ndarray:
        """Per-pixel 2x2 blocks of ``P^T diag(N^{-1}) P``, shape ``(n_pix, 2, 2)``."""
        w = self.noise.inverse_diagonal()
        c, s = self.scan.cos2, self.scan.sin2
        pix = self.scan.pixel_index
        n = self.n_pix
        cc = np.bincount(pix, weights=w * c * c, minlength=n)
        cs = np.bincount(pix, weights=w * c * s, minlength=n)
        ss = np.bincount(pix, weights=w * s * s, minlength=n)
        return np.stack([np.stack([cc, cs], -1), np.stack([cs, ss], -1)], -2)


class MatvecCounter:
    """Thread-safe tally of system-operator applications."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def add(self, n: int = 1):
        with self._lock:
            self._count += n

    @property
    def count(self) -> int:
        return self._count

    def reset(self):
        with self._lock:
            self._count = 0


@dataclass
class SystemOperator:
    """``A = M^T (sum_f P_f^T N_f^{-1} P_f) M`` for one set of mixing coefficients.

    ``cached_rhs_core`` holds the per-channel ``P_f^T N_f^{-1} d_f`` maps once
    data have been attached; it is shared by every operator derived through
    :meth:`with_mixing`.
    """

    mapmakers: tuple
    mixing: MixingCoefficients
    cached_rhs_core: np.ndarray | None = field(default=None, repr=False)
    counter: MatvecCounter = field(default_factory=MatvecCounter, repr=False)

    def __post_init__(self):
        self.mapmakers = tuple(self.mapmakers)
        if len(self.mapmakers) != self.mixing.n_freq:
            raise InvalidConfiguration("one map-making operator per frequency is required")
        n_pix = {m.n_pix for m in self.mapmakers}
        if len(n_pix) != 1:
            raise InvalidConfiguration("all channels must observe the same patch")

    @classmethod
    def from_channels(cls, scans, noises, mixing):
        return cls(tuple(MapMakingOperator(s, n) for s, n in zip(scans, noises)), mixing)

    @property
    def n_pix(self) -> int:
        return self.mapmakers[0].n_pix

    @property
    def size(self) -> int:
        return N_CS * self.n_pix

    @property
    def matvecs(self) -> int:
        return self.counter.count

    @property
    def scans(self):
        return tuple(m.scan for m in self.mapmakers)

    @property
    def noises(self):
        return tuple(m.noise for m in self.mapmakers)

    def with_mixing(self, mixing: MixingCoefficients) -> "SystemOperator":
        """Operator for new mixing coefficients sharing all beta-independent parts."""
        return SystemOperator(self.mapmakers, mixing, self.cached_rhs_core)

    def apply(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if s.shape[-1] != self.size:
            raise ValueError(f"vector length {s.shape[-1]} != {self.size}")
        n_pix = self.n_pix
        freq_maps = mix(self.mixing.K, s, n_pix)
        out = np.empty_like(freq_maps)
        for f, mm in enumerate(self.mapmakers):
            out[..., 2 * f:2 * f + 2, :] = mm.apply(freq_maps[..., 2 * f:2 * f + 2, :])
        self.counter.add(int(np.prod(s.shape[:-1], dtype=int)))
        return mix_transpose(self.mixing.K, out)

    def apply_columns(self, Z: np.ndarray) -> np.ndarray:
        """Apply to the columns of an ``(n, k)`` array."""
        if Z.shape[1] == 0:
            return np.zeros_like(Z)
        return np.ascontiguousarray(self.apply(np.ascontiguousarray(Z.T)).T)

    def __matmul__(self, s):
        return self.apply(s)


def apply_system(op: SystemOperator, s: np.ndarray) -> np.ndarray:
    return op.apply(s)


def build_rhs(op: SystemOperator, data=None) -> np.ndarray:
    """Right-hand side ``M^T P^T N^{-1} d``.

    With ``data`` given, the beta-independent core is recomputed and cached
    on ``op``; without it the cached core is reused.
    """
    if data is not None:
        if len(data) != len(op.mapmakers):
            raise ValueError("one time stream per frequency is required")
        core = []
        for mm, d in zip(op.mapmakers, data):
            d = np.asarray(d, dtype=float)
            if d.shape != (mm.scan.n_samples,):
                raise ValueError("time stream length does not match its scan")
            core.append(mm.weighted_data(d))
        op.cached_rhs_core = np.concatenate(core, axis=0)
    if op.cached_rhs_core is None:
        raise ValueError("no data attached to the operator")
    return mix_transpose(op.mixing.K, op.cached_rhs_core)


@dataclass
class BlockDiagPreconditioner:
    """Per-pixel 6x6 blocks of ``M^T P^T diag(N^{-1}) P M``.

    ``factors`` are the lower Cholesky factors; ``inverses`` the block
    inverses built from them, used for the fast batched application.
    """

    blocks: np.ndarray = field(repr=False)
    factors: np.ndarray = field(repr=False)
    inverses: np.ndarray = field(repr=False)

    @property
    def n_pix(self) -> int:
        return self.blocks.shape[0]

    @classmethod
    def from_blocks(cls, blocks: np.ndarray) -> "BlockDiagPreconditioner":
        blocks = np.asarray(blocks, dtype=float)
        try:
            factors = np.linalg.cholesky(blocks)
        except np.linalg.LinAlgError:
            for p, blk in enumerate(blocks):
                try:
                    np.linalg.cholesky(blk)
                except np.linalg.LinAlgError:
                    raise SingularBlock(p) from None
            raise
        linv = np.linalg.inv(factors)
        inverses = np.einsum("pki,pkj->pij", linv, linv)
        return cls(blocks, factors, inverses)

    def apply(self, s: np.ndarray) -> np.ndarray:
        """Multiply by the block-diagonal matrix."""
        return _blockwise(self.blocks, s)

    def solve(self, r: np.ndarray) -> np.ndarray:
        """Multiply by the inverse of the block-diagonal matrix."""
        return _blockwise(self.inverses, r)

    def apply_columns(self, Z: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(self.apply(np.ascontiguousarray(Z.T)).T)

    def solve_columns(self, Z: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(self.solve(np.ascontiguousarray(Z.T)).T)


def _blockwise(blocks: np.ndarray, s: np.ndarray) -> np.ndarray:
    n_pix = blocks.shape[0]
    S = np.asarray(s, dtype=float).reshape(s.shape[:-1] + (N_CS, n_pix))
    out = np.einsum("pij,...jp->...ip", blocks, S)
    return out.reshape(s.shape)


def assemble_preconditioner(op: SystemOperator) -> BlockDiagPreconditioner:
    blocks = np.zeros((op.n_pix, N_CS, N_CS))
    for f, mm in enumerate(op.mapmakers):
        Kf = op.mixing.block(f)
        blocks += np.einsum("ai,pab,bj->pij", Kf, mm.diagonal_blocks(), Kf)
    blocks = 0.5 * (blocks + blocks.transpose(0, 2, 1))
    return BlockDiagPreconditioner.from_blocks(blocks)


def apply_preconditioner_inverse(prec: BlockDiagPreconditioner, r: np.ndarray) -> np.ndarray:
    return prec.solve(r)


def apply_rotation(s: np.ndarray, n_pix: int, pixel_map=None) -> np.ndarray:
    """Spin-2 rotation by pi/4 of every Q/U pair: ``(Q, U) -> (U, -Q)``.

    ``s`` holds consecutive (Q, U) map pairs, e.g. a component vector
    (three pairs) or a stack of frequency maps.  With ``pixel_map`` the
    pixels are also permuted, ``out[p] = rotated[pixel_map[p]]``.
    """
    s = np.asarray(s, dtype=float)
    shape = s.shape
    pairs = s.reshape(shape[:-1] + (-1, 2, n_pix))
    out = np.empty_like(pairs)
    out[..., 0, :] = pairs[..., 1, :]
    out[..., 1, :] = -pairs[..., 0, :]
    if pixel_map is not None:
        out = out[..., pixel_map]
    return out.reshape(shape)
