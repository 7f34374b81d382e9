"""Bundled beta sequences used as solver fixtures.

Both sequences are synthetic stand-ins generated by the rules below; they
are not measured values.

``maximization``: 26 entries approaching the likelihood peak
``(beta_d, beta_s) = (1.584, -3.006)`` the way an iterative maximizer does.
The offset from the peak shrinks geometrically by ``RHO`` per step while
each coordinate oscillates, so late steps differ by tiny amounts::

    beta_i = peak + offset0 * RHO**i * cos(omega * i + phase)

``sampling``: 30 entries of an AR(1) chain around the peak, imitating a
Markov chain at equilibrium::

    beta_{i+1} = peak + PHI * (beta_i - peak) + step * N(0, 1)
"""
from __future__ import annotations

from importlib import resources

import numpy as np

from .driver import BetaSequence

PEAK = (1.584, -3.006)
RHO = 0.55
OFFSET0 = (0.30, -0.50)
OMEGA = (0.9, 1.3)
PHASE = (0.0, 0.4)

PHI = 0.5
STEP = (0.01, 0.02)
SAMPLING_SEED = 2024

N_MAXIMIZATION = 26
N_SAMPLING = 30

FILES = {"maximization": "beta_maximization.csv", "sampling": "beta_sampling.csv"}


def maximization_sequence(n: int = N_MAXIMIZATION) -> BetaSequence:
    i = np.arange(n)[:, None]
    off = np.asarray(OFFSET0) * RHO**i * np.cos(np.asarray(OMEGA) * i + np.asarray(PHASE))
    return BetaSequence(np.asarray(PEAK) + off, "maximization")


def sampling_sequence(n: int = N_SAMPLING, seed: int = SAMPLING_SEED) -> BetaSequence:
    rng = np.random.default_rng(seed)
    peak, step = np.asarray(PEAK), np.asarray(STEP)
    out = np.empty((n, 2))
    out[0] = peak + step * rng.standard_normal(2) / np.sqrt(1 - PHI**2)
    for i in range(1, n):
        out[i] = peak + PHI * (out[i - 1] - peak) + step * rng.standard_normal(2)
    return BetaSequence(out, "sampling")


def generate(name: str) -> BetaSequence:
    if name == "maximization":
        return maximization_sequence()
    if name == "sampling":
        return sampling_sequence()
    raise KeyError(f"unknown beta sequence {name!r}; choose from {sorted(FILES)}")


def load(name: str) -> BetaSequence:
    """Read a bundled sequence from the package data."""
    if name not in FILES:
        raise KeyError(f"unknown beta sequence {name!r}; choose from {sorted(FILES)}")
    ref = resources.files("tdcompsep") / "data" / FILES[name]
    with resources.as_file(ref) as path:
        return BetaSequence.from_csv(path, name)


def write_bundled(directory) -> None:
    """Regenerate the bundled CSV files into ``directory``."""
    from pathlib import Path
    for name, fname in FILES.items():
        generate(name).to_csv(Path(directory) / fname)
