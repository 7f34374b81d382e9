"""Pointing matrix of a polarized raster scan on a flat rectangular patch."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LAYOUTS = ("crossed", "uniform")


@dataclass(frozen=True)
class ScanPattern:
    """Time-ordered pixel ids and polarizer angles.

    Pixels are numbered row-major on a ``patch_rows x patch_cols`` grid.
    ``subset_boundaries`` holds the five sample offsets delimiting the four
    scan subsets.  With ``layout="crossed"`` subsets 1 and 3 sweep along rows
    and subsets 2 and 4 along columns; with ``layout="uniform"`` every subset
    sweeps along rows.
    """

    pixel_index: np.ndarray = field(repr=False)
    polarizer_angle: np.ndarray = field(repr=False)
    subset_boundaries: np.ndarray
    patch_rows: int
    patch_cols: int
    layout: str = "crossed"

    def __post_init__(self):
        if self.pixel_index.shape != self.polarizer_angle.shape:
            raise ValueError("pixel_index and polarizer_angle lengths differ")
        if self.pixel_index.size and (self.pixel_index.min() < 0
                                      or self.pixel_index.max() >= self.n_pix):
            raise ValueError("pixel id outside the patch")
        object.__setattr__(self, "_cos2", np.cos(2.0 * self.polarizer_angle))
        object.__setattr__(self, "_sin2", np.sin(2.0 * self.polarizer_angle))

    @property
    def n_pix(self) -> int:
        return self.patch_rows * self.patch_cols

    @property
    def n_samples(self) -> int:
        return self.pixel_index.size

    @property
    def sweep_length(self) -> int:
        return self.n_pix

    @property
    def cos2(self) -> np.ndarray:
        return self._cos2

    @property
    def sin2(self) -> np.ndarray:
        return self._sin2

    def hit_counts(self) -> np.ndarray:
        return np.bincount(self.pixel_index, minlength=self.n_pix)

    def symmetry_pixel_map(self):
        """Pixel permutation that pairs with the spin-2 rotation into a scan symmetry.

        Returns None when the rotation alone is the symmetry (uniform layout)
        and the patch transpose for a crossed scan on a square patch.  Raises
        ValueError when the scan has no such symmetry.
        """
        if self.layout == "uniform":
            return None
        if self.patch_rows != self.patch_cols:
            raise ValueError("a crossed scan on a non-square patch has no rotation symmetry")
        n = self.patch_rows
        idx = np.arange(self.n_pix)
        return (idx % n) * n + idx // n

    def same_as(self, other: "ScanPattern") -> bool:
        return (self.patch_rows == other.patch_rows and self.patch_cols == other.patch_cols
                and np.array_equal(self.pixel_index, other.pixel_index)
                and np.array_equal(self.polarizer_angle, other.polarizer_angle))


def apply_pointing(scan: ScanPattern, map_qu: np.ndarray) -> np.ndarray:
    """``(..., 2, n_pix)`` Q/U map(s) -> ``(..., n_samples)`` time stream(s)."""
    map_qu = np.asarray(map_qu)
    if map_qu.shape[-2:] != (2, scan.n_pix):
        raise ValueError(f"map shape {map_qu.shape} does not match the patch")
    q = map_qu[..., 0, :]
    u = map_qu[..., 1, :]
    pix = scan.pixel_index
    return q[..., pix] * scan.cos2 + u[..., pix] * scan.sin2


def _scatter(pix: np.ndarray, weights: np.ndarray, n_pix: int) -> np.ndarray:
    lead = weights.shape[:-1]
    if not lead:
        return np.bincount(pix, weights=weights, minlength=n_pix)
    flat = weights.reshape(-1, weights.shape[-1])
    m = flat.shape[0]
    idx = (pix[None, :] + n_pix * np.arange(m)[:, None]).ravel()
    out = np.bincount(idx, weights=flat.ravel(), minlength=m * n_pix)
    return out.reshape(lead + (n_pix,))


def apply_pointing_transpose(scan: ScanPattern, stream: np.ndarray) -> np.ndarray:
    """``(..., n_samples)`` stream(s) -> ``(..., 2, n_pix)`` Q/U map(s)."""
    stream = np.asarray(stream, dtype=float)
    if stream.shape[-1] != scan.n_samples:
        raise ValueError(f"stream length {stream.shape[-1]} != {scan.n_samples}")
    q = _scatter(scan.pixel_index, stream * scan.cos2, scan.n_pix)
    u = _scatter(scan.pixel_index, stream * scan.sin2, scan.n_pix)
    return np.stack([q, u], axis=-2)
