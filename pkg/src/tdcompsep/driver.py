"""Solve a sequence of systems that differ only in the spectral parameters.

For every beta of the sequence the driver assembles the operator (reusing
the beta-independent parts), forms the initial guess, runs deflated PCG with
the space recycled from the previous solve, and recycles again.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import InvalidParameter, NotConverged
from .operators import N_CS, assemble_preconditioner, build_rhs
from .recycling import RecyclePool, augment_with_rotation, recycle
from .smalldense import pseudo_inverse_product
from .solvers import DEFAULT_TOL, VARIANTS, SolveLog, deflated_pcg

log = logging.getLogger(__name__)

GUESSES = ("zero", "continuation", "adapted")
RECYCLING = ("off", "ritz", "harmonic")
POLICIES = ("continue", "abort")


@dataclass
class SolverConfig:
    """Initial-guess and recycling strategy plus solver settings."""

    guess: str = "zero"
    recycling: str = "off"
    k: int = 10
    dim_p: int = 100
    variant: str = "def1"
    rotation: bool = False
    reorthogonalize: bool = False
    tol: float = DEFAULT_TOL
    maxit: int = 500
    policy: str = "continue"
    skip_two_level: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.guess not in GUESSES:
            raise InvalidParameter(f"guess must be one of {GUESSES}")
        if self.recycling not in RECYCLING:
            raise InvalidParameter(f"recycling must be one of {RECYCLING}")
        if self.variant not in VARIANTS:
            raise InvalidParameter(f"variant must be one of {VARIANTS}")
        if self.policy not in POLICIES:
            raise InvalidParameter(f"policy must be one of {POLICIES}")
        if self.k < 0 or self.dim_p < 0:
            raise InvalidParameter("k and dim_p must be nonnegative")
        if not self.tol > 0:
            raise InvalidParameter("tol must be positive")
        if self.maxit < 1:
            raise InvalidParameter("maxit must be at least 1")

    @property
    def deflating(self) -> bool:
        return self.recycling != "off" and self.k > 0 and not self.skip_two_level

    @property
    def label(self) -> str:
        if not self.deflating:
            return self.guess
        return f"{self.recycling}+{self.guess}"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidParameter(f"unknown solver keys: {sorted(unknown)}")
        return cls(**d)


# the four configurations compared over the 26-system sequence
STRATEGIES = {
    "zero": dict(guess="zero", recycling="off"),
    "continuation": dict(guess="continuation", recycling="off"),
    "adapted": dict(guess="adapted", recycling="off"),
    "recycle+adapted": dict(guess="adapted", recycling="ritz"),
}


@dataclass
class BetaSequence:
    """Ordered ``(beta_d, beta_s)`` pairs, one per system."""

    entries: np.ndarray
    source_tag: str = ""

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 2 or e.shape[1] != 2 or e.shape[0] == 0:
            raise InvalidParameter("a beta sequence needs at least one (beta_d, beta_s) row")
        if not np.all(np.isfinite(e)):
            raise InvalidParameter("beta values must be finite")
        self.entries = e

    def __len__(self):
        return self.entries.shape[0]

    def __getitem__(self, i):
        return tuple(self.entries[i])

    def head(self, n: int) -> "BetaSequence":
        return BetaSequence(self.entries[:n], self.source_tag)

    @classmethod
    def constant(cls, beta_d: float, beta_s: float, n: int) -> "BetaSequence":
        return cls(np.tile([beta_d, beta_s], (n, 1)), "constant")

    @classmethod
    def from_csv(cls, path, source_tag: str | None = None) -> "BetaSequence":
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(reader.fieldnames) != {"beta_d", "beta_s"}:
                raise InvalidParameter(f"{path}: header must be 'beta_d,beta_s'")
            try:
                rows = [(float(r["beta_d"]), float(r["beta_s"])) for r in reader]
            except (TypeError, ValueError) as exc:
                raise InvalidParameter(f"{path}: malformed row ({exc})") from None
        if not rows:
            raise InvalidParameter(f"{path}: empty beta sequence")
        return cls(np.array(rows), source_tag or path.stem)

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["beta_d", "beta_s"])
            for bd, bs in self.entries:
                w.writerow([repr(float(bd)), repr(float(bs))])


@dataclass
class SequenceReport:
    """Per-system logs of one strategy over a sequence."""

    strategy: str
    config: SolverConfig
    per_system: list = field(default_factory=list)
    betas: BetaSequence | None = None

    @property
    def iterations(self) -> int:
        return sum(lg.iterations for lg in self.per_system)

    @property
    def matvecs_iteration(self) -> int:
        return sum(lg.matvecs_iteration for lg in self.per_system)

    @property
    def matvecs_deflation(self) -> int:
        return sum(lg.matvecs_deflation for lg in self.per_system)

    @property
    def matvecs_total(self) -> int:
        return self.matvecs_iteration + self.matvecs_deflation

    @property
    def wall_time(self) -> float:
        return sum(lg.wall_time for lg in self.per_system)

    @property
    def all_converged(self) -> bool:
        return all(lg.converged for lg in self.per_system)

    def summary_row(self) -> dict:
        return {"strategy": self.strategy, "iterations": self.iterations,
                "matvecs_deflation": self.matvecs_deflation,
                "matvecs_total": self.matvecs_total, "wall_time": self.wall_time}


def adapted_guess_matrix(K_prev, K_next) -> np.ndarray:
    """The 6x6 factor ``(K_next^T K_next)^{-1} K_next^T K_prev``."""
    return pseudo_inverse_product(K_next, K_prev)


def initial_guess(strategy: str, prev_solution, K_prev=None, K_next=None, size: int | None = None):
    """Starting vector for the next system.

    ``adapted`` maps the previous solution through the pseudo-inverse of the
    new mixing, applied pixel by pixel with a 6x6 matrix.
    """
    if strategy not in GUESSES:
        raise InvalidParameter(f"guess must be one of {GUESSES}")
    if strategy == "zero" or prev_solution is None:
        if size is None:
            if prev_solution is None:
                raise ValueError("size is needed without a previous solution")
            size = np.asarray(prev_solution).size
        return np.zeros(size)
    s = np.asarray(prev_solution, dtype=float)
    if strategy == "continuation":
        return s.copy()
    if np.array_equal(K_prev, K_next):
        # K^+ K is the identity; skip the product so the guess is exact
        return s.copy()
    X = adapted_guess_matrix(K_prev, K_next)
    return (X @ s.reshape(N_CS, -1)).reshape(-1)


def _finish_system(cfg: SolverConfig, i: int, slog: SolveLog):
    if slog.converged:
        return
    msg = (f"system {i} did not converge in {cfg.maxit} iterations "
           f"(relative residual {slog.residual_history[-1]:.2e})")
    if cfg.policy == "abort":
        raise NotConverged(msg)
    warnings.warn(msg, RuntimeWarning, stacklevel=3)


def run_sequence(config: SolverConfig, betas: BetaSequence, archive, n_systems: int | None = None,
                 callback=None) -> SequenceReport:
    """Solve the systems of ``betas`` in order with one strategy.

    ``archive`` is a :class:`SimulationArchive`; its beta-independent data
    core is computed once.  ``callback(i, solution, log)`` is called after
    every system.
    """
    config.validate()
    if n_systems is not None:
        betas = betas.head(n_systems)
    base = archive.base_operator()
    n_pix = base.n_pix
    pixel_map = base.scans[0].symmetry_pixel_map() if config.rotation else None
    report = SequenceReport(config.label, config, [], betas)

    prev_x, prev_K, carried = None, None, None
    for i in range(len(betas)):
        beta_d, beta_s = betas[i]
        op = base.with_mixing(archive.mixing(beta_d, beta_s))
        b = build_rhs(op)
        B = assemble_preconditioner(op)
        x0 = initial_guess(config.guess, prev_x, prev_K, op.mixing.K, op.size)

        space = carried.for_operator(op) if carried is not None else None
        dim_p = config.dim_p if config.deflating else 0
        x, harvest, slog = deflated_pcg(op, B, b, x0, space, dim_p, config.tol, config.maxit,
                                        config.variant, config.reorthogonalize)
        report.per_system.append(slog)
        log.info("system %d beta=(%.4f, %.4f): %d iterations, %d deflation matvecs",
                 i, beta_d, beta_s, slog.iterations, slog.matvecs_deflation)
        _finish_system(config, i, slog)
        if callback is not None:
            callback(i, x, slog)

        if config.deflating and i + 1 < len(betas):
            pool = RecyclePool.from_solve(space, harvest, B)
            carried = None
            if pool.size:
                new = recycle(pool, config.k, config.recycling, B)
                if config.rotation:
                    new = augment_with_rotation(new, n_pix, pixel_map, max_size=config.k)
                carried = new
        prev_x, prev_K = x, op.mixing.K
    return report


def sweep_recycling_params(config: SolverConfig, betas: BetaSequence, archive, k_values,
                           dimp_values, n_systems: int = 10) -> list:
    """One report per ``(dim_p, k)`` pair over the first ``n_systems`` systems.

    Rows are ordered dim_p-major within each k, as ``[(dim_p, k, report), ...]``.
    """
    if not len(k_values) or not len(dimp_values):
        raise InvalidParameter("empty parameter grid")
    rows = []
    for k in k_values:
        for dim_p in dimp_values:
            cfg = SolverConfig(**{**config.to_dict(), "k": int(k), "dim_p": int(dim_p)})
            if cfg.recycling == "off" and k > 0:
                cfg.recycling = "ritz"
            rows.append((int(dim_p), int(k), run_sequence(cfg, betas, archive, n_systems)))
    return rows
