"""Frequency scaling laws and the Kronecker factor of the mixing matrix."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidParameter

H_PLANCK = 6.62607015e-34
K_BOLTZMANN = 1.380649e-23
C_LIGHT = 2.99792458e8
T_CMB = 2.7525

DEFAULT_FREQUENCIES = (30.0, 40.0, 90.0, 150.0, 220.0, 270.0)
NU_REF = 150.0
BETA_DUST_TRUE = 1.59
BETA_SYNC_TRUE = -3.1
T_DUST_TRUE = 19.6

N_COMP = 3
N_STOKES = 2
N_CS = N_COMP * N_STOKES  # 6 unknowns per pixel


def rj_to_thermo(nu_ghz):
    """Rayleigh-Jeans to thermodynamic conversion factor at nu (GHz)."""
    x = H_PLANCK * np.asarray(nu_ghz, dtype=float) * 1e9 / (K_BOLTZMANN * T_CMB)
    return np.expm1(x) ** 2 / (x * x * np.exp(x))


def blackbody(nu_ghz, temp):
    nu = np.asarray(nu_ghz, dtype=float) * 1e9
    return 2.0 * H_PLANCK * nu**3 / C_LIGHT**2 / np.expm1(H_PLANCK * nu / (K_BOLTZMANN * temp))


def dust_sed(nu_ghz, beta_d, temp):
    x = H_PLANCK * np.asarray(nu_ghz, dtype=float) * 1e9 / (K_BOLTZMANN * temp)
    return x**beta_d * blackbody(nu_ghz, temp)


def sync_sed(nu_ghz, beta_s):
    return np.asarray(nu_ghz, dtype=float) ** beta_s


@dataclass(frozen=True)
class MixingCoefficients:
    """Per-frequency scaling coefficients and the ``2 n_freq x 6`` matrix K.

    Row ``2f`` of K acts on the Q maps and row ``2f + 1`` on the U maps;
    columns follow the component-wise unknown ordering
    (cmb_q, cmb_u, dust_q, dust_u, sync_q, sync_u).
    """

    beta_d: float
    beta_s: float
    T_d: float
    frequencies: tuple
    nu_ref: float
    alpha: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)

    @property
    def n_freq(self) -> int:
        return len(self.frequencies)

    def block(self, f: int) -> np.ndarray:
        """The 2x6 block of K for frequency channel f."""
        return self.K[2 * f:2 * f + 2]


def kron_factor(alpha: np.ndarray) -> np.ndarray:
    """Assemble K from an ``n_freq x 3`` coefficient table."""
    alpha = np.asarray(alpha, dtype=float)
    n_freq = alpha.shape[0]
    K = np.zeros((2 * n_freq, N_CS))
    K[0::2, 0::2] = alpha
    K[1::2, 1::2] = alpha
    return K


def compute_mixing_coefficients(beta_d: float, beta_s: float, T_d: float = T_DUST_TRUE,
                                frequencies=DEFAULT_FREQUENCIES,
                                nu_ref: float = NU_REF) -> MixingCoefficients:
    freqs = np.asarray(frequencies, dtype=float)
    if freqs.ndim != 1 or freqs.size == 0:
        raise InvalidParameter("frequencies must be a nonempty list")
    if np.any(freqs <= 0) or nu_ref <= 0:
        raise InvalidParameter("frequencies must be positive")
    if T_d <= 0:
        raise InvalidParameter("dust temperature must be positive")
    if not (np.isfinite(beta_d) and np.isfinite(beta_s)):
        raise InvalidParameter("spectral indices must be finite")

    gamma = rj_to_thermo(freqs)
    alpha = np.empty((freqs.size, N_COMP))
    alpha[:, 0] = 1.0
    alpha[:, 1] = gamma * dust_sed(freqs, beta_d, T_d) / dust_sed(nu_ref, beta_d, T_d)
    alpha[:, 2] = gamma * sync_sed(freqs, beta_s) / sync_sed(nu_ref, beta_s)
    return MixingCoefficients(float(beta_d), float(beta_s), float(T_d), tuple(freqs.tolist()),
                              float(nu_ref), alpha, kron_factor(alpha))


def mix(K: np.ndarray, s: np.ndarray, n_pix: int) -> np.ndarray:
    """Apply ``K (x) I``: component vector(s) ``(..., 6 n_pix)`` -> ``(..., 2 n_freq, n_pix)``."""
    S = s.reshape(s.shape[:-1] + (N_CS, n_pix))
    return np.einsum("ij,...jp->...ip", K, S)


def mix_transpose(K: np.ndarray, maps: np.ndarray) -> np.ndarray:
    """Apply ``K^T (x) I``: ``(..., 2 n_freq, n_pix)`` -> ``(..., 6 n_pix)``."""
    out = np.einsum("ji,...jp->...ip", K, maps)
    return out.reshape(out.shape[:-2] + (-1,))
