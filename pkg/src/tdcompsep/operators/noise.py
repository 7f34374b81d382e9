"""Stationary 1/f noise with block-circulant covariance.

The time stream is cut into consecutive blocks of ``block_length`` samples.
Within a block the covariance is the circulant matrix whose eigenvalues are
the power spectrum sampled on the discrete Fourier grid, so both the inverse
covariance and exact-covariance noise draws reduce to real FFTs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParameter


@dataclass(frozen=True)
class NoiseModel:
    """PSD ``sigma_rms^2 (1 + f_knee / max(f, f_apo))`` per stationary block.

    ``sigma_rms`` is in the map units (uK) per sample, frequencies in Hz.
    """

    sigma_rms: float
    f_knee: float
    f_apo: float
    sample_rate: float
    block_length: int

    def __post_init__(self):
        if not self.sigma_rms > 0:
            raise InvalidParameter("sigma_rms must be positive")
        if self.f_knee < 0:
            raise InvalidParameter("f_knee must be nonnegative")
        if not self.f_apo > 0:
            raise InvalidParameter("f_apo must be positive")
        if self.f_knee > 0 and not self.f_apo < self.f_knee:
            raise InvalidParameter("f_apo must be below f_knee")
        if not self.sample_rate > 0:
            raise InvalidParameter("sample_rate must be positive")
        L = int(self.block_length)
        if L < 2 or L & (L - 1):
            raise InvalidParameter("block_length must be a power of two")

    @classmethod
    def with_default_apodization(cls, sigma_rms, f_knee, sample_rate, block_length):
        f_apo = f_knee / 100.0 if f_knee > 0 else sample_rate / block_length
        return cls(float(sigma_rms), float(f_knee), float(f_apo), float(sample_rate),
                   int(block_length))

    def scaled(self, factor: float) -> "NoiseModel":
        """Noise model with the amplitude multiplied by ``factor``."""
        return NoiseModel(self.sigma_rms * factor, self.f_knee, self.f_apo,
                          self.sample_rate, self.block_length)

    def psd(self, freq) -> np.ndarray:
        freq = np.abs(np.asarray(freq, dtype=float))
        return self.sigma_rms**2 * (1.0 + self.f_knee / np.maximum(freq, self.f_apo))

    def fft_frequencies(self) -> np.ndarray:
        """Frequencies of the ``rfft`` bins of one block."""
        return np.fft.rfftfreq(self.block_length, d=1.0 / self.sample_rate)

    def eigenvalues(self) -> np.ndarray:
        """Circulant eigenvalues on the ``rfft`` grid (length L/2 + 1)."""
        lam = self.psd(self.fft_frequencies())
        if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
            raise InvalidParameter("noise PSD must be positive and finite")
        return lam

    def full_eigenvalues(self) -> np.ndarray:
        """Circulant eigenvalues in full FFT order (length L)."""
        return self.psd(np.fft.fftfreq(self.block_length, d=1.0 / self.sample_rate))

    def inverse_diagonal(self) -> float:
        """Diagonal entry of the inverse block covariance (constant over time)."""
        return float(np.mean(1.0 / self.full_eigenvalues()))


def _apply_spectral(noise: NoiseModel, stream: np.ndarray, weights: np.ndarray) -> np.ndarray:
    stream = np.asarray(stream, dtype=float)
    L = noise.block_length
    n = stream.shape[-1]
    if n % L:
        raise InvalidParameter(f"stream length {n} is not a multiple of block_length {L}")
    blocks = stream.reshape(stream.shape[:-1] + (n // L, L))
    out = np.fft.irfft(np.fft.rfft(blocks, axis=-1) * weights, n=L, axis=-1)
    return out.reshape(stream.shape)


def apply_noise_inverse(noise: NoiseModel, stream: np.ndarray) -> np.ndarray:
    """Apply ``N^{-1}`` block by block."""
    return _apply_spectral(noise, stream, 1.0 / noise.eigenvalues())


def apply_noise(noise: NoiseModel, stream: np.ndarray) -> np.ndarray:
    """Apply ``N`` block by block (same circulant eigenvalues)."""
    return _apply_spectral(noise, stream, noise.eigenvalues())


def noise_sqrt(noise: NoiseModel, white: np.ndarray) -> np.ndarray:
    """Color unit white noise so that its covariance is exactly ``N``."""
    return _apply_spectral(noise, white, np.sqrt(noise.eigenvalues()))
