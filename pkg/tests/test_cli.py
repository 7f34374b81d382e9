import csv
import json

import numpy as np
import pytest

from tdcompsep.archive import load_archive
from tdcompsep.cli import main

SMALL = ["--rows", "8", "--cols", "8", "--f-apo-ratio", "0.001"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def archive_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("arc") / "a"
    assert main(["simulate", "--out", str(out), *SMALL]) == 0
    return out


def test_simulate_default_six_streams(tmp_path):
    assert main(["simulate", "--out", str(tmp_path / "a")]) == 0
    arc = load_archive(tmp_path / "a")
    assert len(arc.streams) == 6
    assert arc.config.patch_rows == 32


def test_simulate_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--out", str(tmp_path / name), *SMALL, "--seed", "3"]) == 0
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_simulate_invalid_patch(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path / "a"), "--rows", "1"]) == 2
    assert "patch_rows" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, archive_dir):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["solve", "--archive", str(archive_dir), "--betas", "maximization",
                 "--out", str(tmp_path), "--config", str(cfg)]) == 2


def test_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"patch_rows": 4, "patch_cols": 4}))
    assert main(["simulate", "--out", str(tmp_path / "a"), "--config", str(cfg)]) == 0
    assert load_archive(tmp_path / "a").config.patch_rows == 4


def test_empty_beta_file(tmp_path, archive_dir):
    betas = tmp_path / "b.csv"
    betas.write_text("beta_d,beta_s\n")
    assert main(["solve", "--archive", str(archive_dir), "--betas", str(betas),
                 "--out", str(tmp_path / "o")]) == 2


def test_missing_archive(tmp_path):
    assert main(["solve", "--archive", str(tmp_path / "none"), "--betas", "maximization",
                 "--out", str(tmp_path / "o")]) == 2


def test_solve_history_and_summary(tmp_path, archive_dir):
    out = tmp_path / "o"
    assert main(["solve", "--archive", str(archive_dir), "--betas", "maximization",
                 "--n-systems", "3", "--out", str(out)]) == 0
    hist = read_csv(out / "history.csv")
    assert list(hist[0]) == ["system_index", "iteration", "relative_residual"]
    assert {int(r["system_index"]) for r in hist} == {0, 1, 2}
    summary = read_csv(out / "summary.csv")
    assert list(summary[0]) == ["strategy", "iterations", "matvecs_deflation", "matvecs_total",
                                "wall_time"]
    assert len(summary) == 1


def test_solve_compare_four_rows(tmp_path, archive_dir):
    out = tmp_path / "o"
    assert main(["solve", "--archive", str(archive_dir), "--betas", "maximization",
                 "--n-systems", "4", "--compare", "--out", str(out)]) == 0
    rows = read_csv(out / "summary.csv")
    assert [r["strategy"] for r in rows] == ["zero", "continuation", "adapted", "recycle+adapted"]
    for r in rows:
        assert int(r["matvecs_total"]) == int(r["iterations"]) + int(r["matvecs_deflation"])
    assert (out / "history_recycle_adapted.csv").is_file()


def test_k_zero_reproduces_baseline(tmp_path, archive_dir):
    common = ["solve", "--archive", str(archive_dir), "--betas", "maximization",
              "--n-systems", "3"]
    assert main([*common, "--out", str(tmp_path / "a")]) == 0
    assert main([*common, "--recycling", "ritz", "--k", "0", "--out", str(tmp_path / "b")]) == 0
    a = read_csv(tmp_path / "a" / "summary.csv")[0]
    b = read_csv(tmp_path / "b" / "summary.csv")[0]
    for key in ("iterations", "matvecs_deflation", "matvecs_total"):
        assert a[key] == b[key]
    ha = read_csv(tmp_path / "a" / "history.csv")
    hb = read_csv(tmp_path / "b" / "history.csv")
    np.testing.assert_allclose([float(r["relative_residual"]) for r in ha],
                               [float(r["relative_residual"]) for r in hb], rtol=1e-12)


def test_abort_exit_code(tmp_path, archive_dir):
    assert main(["solve", "--archive", str(archive_dir), "--betas", "maximization",
                 "--n-systems", "2", "--maxit", "3", "--policy", "abort",
                 "--out", str(tmp_path / "o")]) == 1


@pytest.mark.parametrize("k_list,dimp_list,n_rows", [("6,10", "20,50,100", 6), ("6", "20", 1)])
def test_sweep_grid(tmp_path, archive_dir, k_list, dimp_list, n_rows):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--archive", str(archive_dir), "--betas", "maximization",
                 "--n-systems", "3", "--k-list", k_list, "--dimp-list", dimp_list,
                 "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == n_rows
    assert list(rows[0]) == ["dim_p", "k", "iterations", "deflation", "total"]
    for r in rows:
        assert int(r["total"]) == int(r["iterations"]) + int(r["deflation"])
        assert int(r["deflation"]) == int(r["k"]) * 2


def test_bad_argument_exit_code():
    assert main(["solve", "--guess", "nonsense"]) == 2
