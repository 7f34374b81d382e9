"""Seeded synthetic multi-frequency time-ordered data.

Random streams are derived from the master seed by a fixed rule:
``numpy.random.default_rng([seed, purpose, index])`` with purpose 0 for the
sky (index 0) and purpose 1 for the noise of frequency channel ``index``.
Every artifact is therefore a pure function of the configuration.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import InvalidParameter
from .operators import (
    BETA_DUST_TRUE,
    BETA_SYNC_TRUE,
    DEFAULT_FREQUENCIES,
    N_CS,
    NU_REF,
    T_DUST_TRUE,
    NoiseModel,
    ScanPattern,
    SystemOperator,
    apply_pointing,
    build_rhs,
    compute_mixing_coefficients,
    mix,
    noise_sqrt,
)
from .operators.pointing import LAYOUTS

SUBSET_ANGLES = (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4)
COMPONENTS = ("cmb", "dust", "sync")

SKY_STREAM = 0
NOISE_STREAM = 1


def stream_rng(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(purpose), int(index)])


def generate_scan(patch_rows: int, patch_cols: int, sweeps_per_subset: int = 2,
                  layout: str = "crossed") -> ScanPattern:
    """Four-subset raster scan with polarizer angles 0, pi/4, pi/2, 3pi/4."""
    if patch_rows < 2 or patch_cols < 2:
        raise InvalidParameter("patch dimensions must be at least 2")
    if sweeps_per_subset < 1:
        raise InvalidParameter("sweeps_per_subset must be positive")
    if layout not in LAYOUTS:
        raise InvalidParameter(f"unknown scan layout {layout!r}")
    grid = np.arange(patch_rows * patch_cols).reshape(patch_rows, patch_cols)
    along_rows = grid.ravel()
    along_cols = grid.T.ravel()

    pix, ang, bounds = [], [], [0]
    for i, phi in enumerate(SUBSET_ANGLES):
        sweep = along_cols if (layout == "crossed" and i % 2 == 1) else along_rows
        sub = np.tile(sweep, sweeps_per_subset)
        pix.append(sub)
        ang.append(np.full(sub.size, phi))
        bounds.append(bounds[-1] + sub.size)
    return ScanPattern(np.concatenate(pix).astype(np.int64), np.concatenate(ang),
                       np.array(bounds, dtype=np.int64), patch_rows, patch_cols, layout)


@dataclass
class SkyModel:
    """Component Q/U maps in the component-wise layout, shape ``(6, n_pix)``."""

    maps: np.ndarray = field(repr=False)
    patch_rows: int
    patch_cols: int
    amplitudes: tuple
    seed: int

    @property
    def n_pix(self) -> int:
        return self.patch_rows * self.patch_cols

    def component(self, name: str) -> np.ndarray:
        i = COMPONENTS.index(name)
        return self.maps[2 * i:2 * i + 2]

    @property
    def vector(self) -> np.ndarray:
        return self.maps.reshape(-1)


def _smoothing_kernel(rows, cols, fwhm_pix):
    if fwhm_pix <= 0:
        return np.ones((rows, np.fft.rfftfreq(cols).size))
    sigma = fwhm_pix / np.sqrt(8.0 * np.log(2.0))
    ky = np.fft.fftfreq(rows)[:, None]
    kx = np.fft.rfftfreq(cols)[None, :]
    return np.exp(-2.0 * (np.pi * sigma) ** 2 * (kx**2 + ky**2))


def generate_sky(patch_rows: int, patch_cols: int, seed: int,
                 amplitudes=(1.0, 10.0, 3.0), smoothing: float = 3.0) -> SkyModel:
    """Gaussian random Q/U fields for CMB, dust and synchrotron.

    Seeded white noise is smoothed with a periodic Gaussian kernel of FWHM
    ``smoothing`` pixels and rescaled so that each map's expected rms equals
    its component amplitude.
    """
    if len(amplitudes) != 3:
        raise InvalidParameter("one amplitude per component is required")
    rng = stream_rng(seed, SKY_STREAM)
    kern = _smoothing_kernel(patch_rows, patch_cols, smoothing)
    # per-pixel variance of filtered unit white noise = energy of the impulse response
    var = np.sum(np.fft.irfft2(kern, s=(patch_rows, patch_cols)) ** 2)
    maps = np.empty((N_CS, patch_rows * patch_cols))
    for i in range(N_CS):
        white = rng.standard_normal((patch_rows, patch_cols))
        field_ = np.fft.irfft2(np.fft.rfft2(white) * kern, s=(patch_rows, patch_cols))
        maps[i] = amplitudes[i // 2] * field_.ravel() / np.sqrt(var)
    return SkyModel(maps, patch_rows, patch_cols, tuple(float(a) for a in amplitudes), int(seed))


def generate_noise(noise: NoiseModel, n_samples: int, seed: int, index: int = 0) -> np.ndarray:
    """Noise stream whose covariance is exactly the block-circulant ``N``."""
    if n_samples % noise.block_length:
        raise InvalidParameter("n_samples must be a multiple of block_length")
    white = stream_rng(seed, NOISE_STREAM, index).standard_normal(n_samples)
    return noise_sqrt(noise, white)


def default_knees(n_freq: int, f_min: float = 0.5, f_max: float = 3.0) -> tuple:
    if n_freq == 1:
        return (float(f_min),)
    return tuple(np.geomspace(f_min, f_max, n_freq).tolist())


@dataclass
class SimulationConfig:
    """All parameters of a simulated data set (desk-scale defaults)."""

    patch_rows: int = 32
    patch_cols: int = 32
    sweeps_per_subset: int = 2
    layout: str = "crossed"
    frequencies: tuple = DEFAULT_FREQUENCIES
    nu_ref: float = NU_REF
    sigma_rms: float = 30.0
    f_knees: tuple | None = None
    f_knee_min: float = 0.5
    f_knee_max: float = 3.0
    f_apo_ratio: float = 0.01
    sample_rate: float = 10.0
    block_length: int | None = None
    beta_d: float = BETA_DUST_TRUE
    beta_s: float = BETA_SYNC_TRUE
    T_d: float = T_DUST_TRUE
    amplitudes: tuple = (1.0, 10.0, 3.0)
    smoothing: float = 3.0
    noiseless: bool = False
    seed: int = 0

    def __post_init__(self):
        self.frequencies = tuple(float(f) for f in self.frequencies)
        self.amplitudes = tuple(float(a) for a in self.amplitudes)
        if self.f_knees is not None:
            self.f_knees = tuple(float(f) for f in self.f_knees)
        self.validate()

    def validate(self):
        for name in ("patch_rows", "patch_cols"):
            if int(getattr(self, name)) < 2:
                raise InvalidParameter(f"{name} must be at least 2")
        if self.sweeps_per_subset < 1:
            raise InvalidParameter("sweeps_per_subset must be positive")
        if self.layout not in LAYOUTS:
            raise InvalidParameter(f"layout must be one of {LAYOUTS}")
        if len(self.frequencies) < 1 or min(self.frequencies) <= 0:
            raise InvalidParameter("frequencies must be positive")
        if self.f_knees is not None and len(self.f_knees) != len(self.frequencies):
            raise InvalidParameter("f_knees needs one entry per frequency")
        if self.sigma_rms <= 0:
            raise InvalidParameter("sigma_rms must be positive")
        if not 0 < self.f_apo_ratio < 1:
            raise InvalidParameter("f_apo_ratio must lie in (0, 1)")
        if self.T_d <= 0:
            raise InvalidParameter("T_d must be positive")
        L = self.resolved_block_length
        if L < 2 or L & (L - 1):
            raise InvalidParameter("block_length must be a power of two")
        if (self.patch_rows * self.patch_cols * self.sweeps_per_subset) % L:
            raise InvalidParameter("block_length must divide the samples of one subset")

    @property
    def resolved_block_length(self) -> int:
        if self.block_length is not None:
            return int(self.block_length)
        return int(self.patch_rows * self.patch_cols)

    @property
    def knees(self) -> tuple:
        if self.f_knees is not None:
            return self.f_knees
        return default_knees(len(self.frequencies), self.f_knee_min, self.f_knee_max)

    def noise_models(self) -> tuple:
        L = self.resolved_block_length
        out = []
        for fk in self.knees:
            f_apo = fk * self.f_apo_ratio if fk > 0 else self.sample_rate / L
            out.append(NoiseModel(self.sigma_rms, fk, f_apo, self.sample_rate, L))
        return tuple(out)

    def scans(self) -> tuple:
        scan = generate_scan(self.patch_rows, self.patch_cols, self.sweeps_per_subset, self.layout)
        return tuple(scan for _ in self.frequencies)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidParameter(f"unknown simulation keys: {sorted(unknown)}")
        d = dict(d)
        for k in ("frequencies", "f_knees", "amplitudes"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


BENCHMARK_F_APO_RATIO = 1e-3


def benchmark_config(**overrides) -> SimulationConfig:
    """Desk-scale configuration used for the solver-trend benchmarks.

    Identical to the defaults except for a lower apodization frequency,
    ``f_apo = f_knee / 1000``.  This separates the few slowest eigenvectors
    from the rest of the spectrum so that deflation has a clear effect.
    """
    return SimulationConfig(**{"f_apo_ratio": BENCHMARK_F_APO_RATIO, **overrides})


@dataclass
class SimulationArchive:
    """Everything needed to rebuild the operators and data bit-exactly."""

    config: SimulationConfig
    scans: tuple
    noises: tuple
    sky: SkyModel
    streams: list = field(repr=False)
    format_version: int = 1

    @property
    def beta_true(self) -> tuple:
        return (self.config.beta_d, self.config.beta_s, self.config.T_d)

    @property
    def n_pix(self) -> int:
        return self.sky.n_pix

    def mixing(self, beta_d: float, beta_s: float):
        c = self.config
        return compute_mixing_coefficients(beta_d, beta_s, c.T_d, c.frequencies, c.nu_ref)

    def base_operator(self, beta_d: float | None = None,
                      beta_s: float | None = None) -> SystemOperator:
        """System operator with the beta-independent data core attached."""
        beta_d = self.config.beta_d if beta_d is None else beta_d
        beta_s = self.config.beta_s if beta_s is None else beta_s
        op = SystemOperator.from_channels(self.scans, self.noises, self.mixing(beta_d, beta_s))
        build_rhs(op, self.streams)
        return op


def generate_tod(sky: SkyModel, scans, noises, config: SimulationConfig) -> SimulationArchive:
    """Mix the sky at the true parameters, scan it and add noise per channel."""
    if len(scans) != len(config.frequencies) or len(noises) != len(config.frequencies):
        raise InvalidParameter("one scan and one noise model per frequency are required")
    mixing = compute_mixing_coefficients(config.beta_d, config.beta_s, config.T_d,
                                         config.frequencies, config.nu_ref)
    freq_maps = mix(mixing.K, sky.vector, sky.n_pix)
    streams = []
    for f, (scan, noise) in enumerate(zip(scans, noises)):
        if scan.n_pix != sky.n_pix:
            raise InvalidParameter("scan and sky dimensions differ")
        d = apply_pointing(scan, freq_maps[2 * f:2 * f + 2])
        if not config.noiseless:
            d = d + generate_noise(noise, scan.n_samples, config.seed, f)
        streams.append(d)
    return SimulationArchive(config, tuple(scans), tuple(noises), sky, streams)


def simulate(config: SimulationConfig | None = None) -> SimulationArchive:
    config = config or SimulationConfig()
    sky = generate_sky(config.patch_rows, config.patch_cols, config.seed, config.amplitudes,
                       config.smoothing)
    return generate_tod(sky, config.scans(), config.noise_models(), config)
