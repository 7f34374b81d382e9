"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The solver-trend criteria (3, 4, 5, 9, 10) run on ``benchmark_config()``,
the desk-scale configuration with ``f_apo = f_knee / 1000``.
"""
import time

import numpy as np
import pytest
import scipy.linalg as sl
import scipy.sparse.linalg as spl
from acceptance_report import record
from conftest import small_config
from oracles import (
    dense_block_matrix,
    dense_preconditioner,
    dense_rhs,
    dense_system,
    system_matrix_fast,
)

from tdcompsep import betas
from tdcompsep.driver import BetaSequence, STRATEGIES, SolverConfig, initial_guess, run_sequence
from tdcompsep.operators import (
    apply_noise,
    apply_noise_inverse,
    apply_preconditioner_inverse,
    apply_rotation,
    apply_system,
    assemble_preconditioner,
    build_rhs,
    compute_mixing_coefficients,
)
from tdcompsep.recycling import (
    RecyclePool,
    augment_with_rotation,
    construct_multiplicity_triplets,
    dense_mapmaking_pencil,
    harmonic_ritz_recycle,
    ritz_recycle,
)
from tdcompsep.simulator import benchmark_config, generate_noise, simulate
from tdcompsep.solvers import DEFAULT_TOL, DeflationSpace, deflated_pcg, pcg

pytestmark = pytest.mark.slow


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.fixture(scope="module")
def bench_archive():
    return simulate(benchmark_config())


@pytest.fixture(scope="module")
def strategy_reports(bench_archive):
    seq = betas.load("maximization")
    out = {}
    for name, st in STRATEGIES.items():
        t0 = time.perf_counter()
        rep = run_sequence(SolverConfig(**st), seq, bench_archive)
        out[name] = (rep, time.perf_counter() - t0)
    return out


def test_criterion_01_dense_oracle(rng):
    t0 = time.perf_counter()
    worst_op = worst_sol = 0.0
    for rows in (4, 8):
        arc = simulate(small_config(rows, rows, sweeps_per_subset=2))
        op = arc.base_operator(1.52, -2.95)
        A = dense_system(op)
        s = rng.standard_normal(op.size)
        b = build_rhs(op)
        prec = assemble_preconditioner(op)
        Bd = dense_preconditioner(op)
        r = rng.standard_normal(op.size)
        worst_op = max(worst_op, rel(apply_system(op, s), A @ s), rel(b, dense_rhs(op, arc.streams)),
                       np.linalg.norm(dense_block_matrix(prec) - Bd) / np.linalg.norm(Bd),
                       rel(apply_preconditioner_inverse(prec, r), np.linalg.solve(Bd, r)))
        x, log = pcg(op, prec, b, tol=1e-8)
        worst_sol = max(worst_sol, rel(x, np.linalg.solve(A, b)))
    elapsed = time.perf_counter() - t0
    ok = worst_op <= 1e-10 and worst_sol <= 1e-6 and elapsed < 10
    assert record(1, "dense-oracle equivalence", ok,
                  f"operators {worst_op:.1e} (<=1e-10), PCG vs direct {worst_sol:.1e} (<=1e-6), "
                  f"{elapsed:.1f}s (<10s)")


def test_criterion_02_stopping_rule(strategy_reports, small_archive):
    logs = [lg for rep, _ in strategy_reports.values() for lg in rep.per_system]
    op = small_archive.base_operator()
    B = assemble_preconditioner(op)
    b = build_rhs(op)
    _, single = pcg(op, B, b)
    logs.append(single)
    Z = DeflationSpace.build(op, np.random.default_rng(0).standard_normal((op.size, 5)))
    for variant in ("def1", "adef2"):
        logs.append(deflated_pcg(op, B, b, Z=Z, variant=variant)[2])
    converged = [lg for lg in logs if lg.converged]
    worst = max(lg.true_residual for lg in converged)
    min_its = min(lg.iterations for lg in logs if not lg.zero_rhs)
    ok = len(converged) == len(logs) and worst < DEFAULT_TOL and min_its >= 1
    assert record(2, "stopping rule", ok,
                  f"{len(converged)}/{len(logs)} converged, max true residual {worst:.2e} "
                  f"(<1e-8), min iterations {min_its} (>=1)")


def oracle_eigenvectors(op, B, count, extra=10):
    """Smallest generalized eigenpairs of (A, B) by shift-invert Lanczos on dense A.

    A few more pairs than needed are computed so that a degenerate cluster
    straddling ``count`` is resolved in full before truncation.
    """
    A = system_matrix_fast(op)
    chol = sl.cho_factor(A)
    n = op.size
    op_inv = spl.LinearOperator((n, n), matvec=lambda v: sl.cho_solve(chol, v), dtype=float)
    M = spl.LinearOperator((n, n), matvec=B.apply, dtype=float)
    v0 = np.random.default_rng(0).standard_normal(n)
    w, V = spl.eigsh(spl.aslinearoperator(A), k=count + extra, M=M, sigma=0.0, which="LM",
                     OPinv=op_inv, tol=1e-12, v0=v0)
    order = np.argsort(w)
    return w[order][:count], V[:, order][:, :count]


def test_criterion_03_deflation_monotonicity(bench_archive):
    t0 = time.perf_counter()
    op = bench_archive.base_operator()
    B = assemble_preconditioner(op)
    b = build_rhs(op)
    _, V = oracle_eigenvectors(op, B, 10)
    its = {}
    for k in (0, 2, 6, 10):
        Z = DeflationSpace.build(op, V[:, :k]) if k else None
        its[k] = deflated_pcg(op, B, b, Z=Z)[2].iterations
    elapsed = time.perf_counter() - t0
    ratio = its[10] / its[0]
    ok = its[10] <= its[6] <= its[2] < its[0] and ratio <= 0.7 and elapsed < 120
    assert record(3, "deflation monotonicity", ok,
                  f"iterations k=0/2/6/10: {its[0]}/{its[2]}/{its[6]}/{its[10]}, "
                  f"ratio {ratio:.2f} (<=0.7), {elapsed:.0f}s (<120s)")


def test_criterion_04_strategy_ordering(strategy_reports):
    tot = {name: rep.matvecs_total for name, (rep, _) in strategy_reports.items()}
    elapsed = sum(t for _, t in strategy_reports.values())
    ratio = tot["recycle+adapted"] / tot["zero"]
    ok = (tot["recycle+adapted"] < tot["adapted"] < tot["continuation"] < tot["zero"]
          and ratio <= 0.5 and elapsed < 600)
    assert record(4, "strategy ordering", ok,
                  f"matvecs zero/continuation/adapted/recycle+adapted: {tot['zero']}/"
                  f"{tot['continuation']}/{tot['adapted']}/{tot['recycle+adapted']}, "
                  f"ratio {ratio:.2f} (<=0.5), {elapsed:.0f}s (<600s)")


def test_criterion_05_sweep_trend(bench_archive):
    seq = betas.load("maximization")
    rows = {}
    for k in (6, 10):
        for dim_p in (20, 50, 100):
            cfg = SolverConfig(guess="adapted", recycling="ritz", k=k, dim_p=dim_p)
            rows[(dim_p, k)] = run_sequence(cfg, seq, bench_archive, n_systems=10)
    ok = all(rows[(100, k)].matvecs_total <= rows[(20, k)].matvecs_total for k in (6, 10))
    ok &= all(rep.matvecs_deflation == 9 * k for (_, k), rep in rows.items())
    table = ", ".join(f"({d},{k}) {r.iterations}+{r.matvecs_deflation}={r.matvecs_total}"
                      for (d, k), r in sorted(rows.items(), key=lambda kv: (kv[0][1], kv[0][0])))
    assert record(5, "dim_p/k sweep trend", ok, table)


def test_criterion_06_fixed_beta_identity(small_archive, rng):
    op = small_archive.base_operator()
    x, _ = pcg(op, assemble_preconditioner(op), build_rhs(op))
    K = op.mixing.K
    exact = np.array_equal(initial_guess("adapted", x, K, K), x)
    seq = BetaSequence.constant(1.59, -3.1, 5)
    worst = 0
    for guess in ("continuation", "adapted"):
        rep = run_sequence(SolverConfig(guess=guess), seq, small_archive)
        worst = max(worst, max(lg.iterations for lg in rep.per_system[1:]))
    ok = exact and worst <= 2
    assert record(6, "fixed-beta identity", ok,
                  f"adapted guess bit-exact: {exact}, max iterations per repeat {worst} (<=2)")


def test_criterion_07_kronecker_shortcut(rng):
    n = 64
    seq = betas.load("maximization").entries
    worst = 0.0
    for (bd0, bs0), (bd1, bs1) in zip(seq[:5], seq[1:6]):
        Kp = compute_mixing_coefficients(bd0, bs0).K
        Kn = compute_mixing_coefficients(bd1, bs1).K
        s = rng.standard_normal(6 * n)
        dense = np.linalg.pinv(np.kron(Kn, np.eye(n))) @ np.kron(Kp, np.eye(n)) @ s
        worst = max(worst, rel(initial_guess("adapted", s, Kp, Kn), dense))
    assert record(7, "Kronecker shortcut", worst <= 1e-12, f"max relative difference {worst:.1e} (<=1e-12)")


def test_criterion_08_triplet_spectrum():
    arc = simulate(small_config(8, 8, f_knees=(1.0,) * 6))
    op = arc.base_operator()
    B = assemble_preconditioner(op)
    A = dense_system(op)
    Bd = dense_block_matrix(B)
    Z = construct_multiplicity_triplets(op)
    AZ = A @ Z.Z
    res = np.linalg.norm(AZ - Bd @ Z.Z * Z.values, axis=0) / np.linalg.norm(AZ, axis=0)
    b = build_rhs(op)
    plain = pcg(op, B, b)[1].iterations
    defl = deflated_pcg(op, B, b, Z=construct_multiplicity_triplets(op, count=2))[2].iterations
    ok = Z.k == 6 * op.n_pix and res.max() <= 1e-9 and defl < plain
    assert record(8, "analytic triplet spectrum", ok,
                  f"{Z.k} vectors (6*n_pix={6 * op.n_pix}), max residual {res.max():.1e} (<=1e-9), "
                  f"PCG {plain} vs 2 triplets {defl} iterations")


def test_criterion_09_rotation_multiplicity():
    arc = simulate(benchmark_config(patch_rows=16, patch_cols=16))
    pm = arc.scans[0].symmetry_pixel_map()
    n = arc.n_pix
    # pencil relation for rotated map-making eigenvectors
    Am, Bm = dense_mapmaking_pencil(arc.base_operator().mapmakers[0])
    w, V = sl.eigh(Am, Bm)
    RV = apply_rotation(V[:, :40].T, n, pm).T
    pencil_res = (np.linalg.norm(Am @ RV - Bm @ RV * w[:40], axis=0)
                  / np.linalg.norm(Am @ RV, axis=0)).max()
    # one member of each leading eigenvalue doublet of the full system
    op0 = arc.base_operator(1.55, -3.0)
    B0 = assemble_preconditioner(op0)
    wa, Va = sl.eigh(system_matrix_fast(op0), dense_block_matrix(B0))
    pick, i = [], 0
    while len(pick) < 3:
        if abs(wa[i + 1] - wa[i]) <= 1e-8 * wa[i]:
            pick.append(i)
            i += 2
        else:
            i += 1
    Z = Va[:, pick]
    Za = augment_with_rotation(Z, n, pm)
    op1 = arc.base_operator(1.59, -3.1)
    B1 = assemble_preconditioner(op1)
    b1 = build_rhs(op1)
    its_plain = deflated_pcg(op1, B1, b1, Z=DeflationSpace.build(op1, Z))[2].iterations
    its_aug = deflated_pcg(op1, B1, b1, Z=DeflationSpace.build(op1, Za))[2].iterations
    ok = pencil_res <= 1e-10 and Za.shape[1] == 2 * Z.shape[1] and its_aug < its_plain
    assert record(9, "rotation multiplicity", ok,
                  f"pencil residual of R v {pencil_res:.1e} (<=1e-10), next-system iterations "
                  f"{its_plain} with {Z.shape[1]} vectors vs {its_aug} augmented to {Za.shape[1]}")


def test_criterion_10_ritz_correctness():
    arc = simulate(benchmark_config(patch_rows=16, patch_cols=16))
    seq = betas.load("maximization").entries
    op = arc.base_operator(*seq[0])
    B = assemble_preconditioner(op)
    A = system_matrix_fast(op)
    Bd = dense_block_matrix(B)
    w, V = sl.eigh(A, Bd)
    lo, hi = w[0] * (1 - 1e-9), w[-1] * (1 + 1e-9)
    _, harvest, _ = deflated_pcg(op, B, build_rhs(op), dim_p=100)
    pool = RecyclePool.from_solve(None, harvest, B)
    ritz = ritz_recycle(pool, 10).values
    harm = harmonic_ritz_recycle(pool, 10, B).values
    inside = bool(np.all((ritz >= lo) & (ritz <= hi)) and np.all((harm >= lo) & (harm <= hi)))
    idx = [0, 3, 7, 12]
    U = V[:, idx] @ np.random.default_rng(3).standard_normal((4, 4))
    exact = RecyclePool(U, A @ U, Bd @ U)
    err = max(np.abs(ritz_recycle(exact, 4).values / w[idx] - 1).max(),
              np.abs(harmonic_ritz_recycle(exact, 4, B).values / w[idx] - 1).max())
    ok = inside and err <= 1e-9
    assert record(10, "Ritz correctness", ok,
                  f"Ritz/harmonic values in [{w[0]:.3g}, {w[-1]:.3g}]: {inside}, smallest Ritz "
                  f"{ritz[0]:.3g}, invariant-subspace error {err:.1e} (<=1e-9)")


def test_criterion_11_noise_statistics(bench_archive, rng):
    noise = bench_archive.noises[0]
    L = noise.block_length
    blocks = 32
    acc = np.zeros(L // 2 + 1)
    for r in range(100):
        d = generate_noise(noise, L * blocks, 1000 + r).reshape(blocks, L)
        acc += np.sum(np.abs(np.fft.rfft(d, axis=-1)) ** 2, axis=0) / L
    pgram = acc / (100 * blocks)
    f = noise.fft_frequencies()
    band = (f >= 4 * noise.f_apo) & (f <= noise.sample_rate / 4)
    dev = np.abs(pgram[band] / noise.psd(f[band]) - 1).max()
    worst = 0.0
    for nm in bench_archive.noises:
        v = rng.standard_normal((4, 2 * nm.block_length))
        worst = max(worst, rel(apply_noise_inverse(nm, apply_noise(nm, v)), v),
                    rel(apply_noise(nm, apply_noise_inverse(nm, v)), v))
    ok = dev <= 0.10 and worst <= 1e-12
    assert record(11, "noise statistics", ok,
                  f"periodogram deviation {dev:.3f} over {band.sum()} mid-band bins (<=0.10), "
                  f"N^-1 N = I to {worst:.1e} (<=1e-12)")


def test_criterion_12_overhead(bench_archive):
    op = bench_archive.base_operator()
    B = assemble_preconditioner(op)
    b = build_rhs(op)
    _, harvest, plain = deflated_pcg(op, B, b, dim_p=100)
    Z = ritz_recycle(RecyclePool.from_solve(None, harvest, B), 10).for_operator(op)
    _, _, defl = deflated_pcg(op, B, b, Z=Z)
    _, base = pcg(op, B, b)
    t_plain = base.wall_time / base.iterations
    t_defl = defl.wall_time / defl.iterations
    record(12, "per-iteration overhead (informational)", True,
           f"plain {1e3 * t_plain:.2f} ms/it, deflated k=10 {1e3 * t_defl:.2f} ms/it, "
           f"ratio {t_defl / t_plain:.3f}")
