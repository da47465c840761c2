import csv
import io
import os
import subprocess
import sys
from pathlib import Path

import pytest

from wallmodels.harness import bench, coupled
from wallmodels.harness.cli import main
from wallmodels.harness.profiles import synthetic_reichardt, write_profile


def out_dir():
    return Path(os.environ["WALLMODELS_OUTPUT_DIR"])


def read_csv(path):
    return list(csv.reader(io.StringIO(path.read_text())))


def test_quadtable(capsys):
    assert main(["quadtable", "--q", "3", "--q", "4"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["q", "index", "node", "weight"] and len(rows) == 8


def test_apriori_with_profile_file(reichardt_file, capsys):
    assert main(["apriori", "--model", "gq-clustered", "--profile", str(reichardt_file)]) == 0
    out = capsys.readouterr().out
    assert "result = pass" in out and "model = gq-clustered" in out


def test_apriori_iwm_synthetic(capsys):
    assert main(["apriori", "--model", "iwm", "--synthetic"]) == 0
    assert "fallback = False" in capsys.readouterr().out


def test_apriori_needs_a_profile(capsys):
    assert main(["apriori"]) == 2
    assert "--profile" in capsys.readouterr().err


def test_apriori_fails_validation_when_underresolved(capsys):
    assert main(["apriori", "--model", "gq-linear", "--synthetic", "--retau", "100000", "--n", "8"]) == 1
    assert "result = fail" in capsys.readouterr().out


def test_apriori_missing_file(tmp_path, capsys):
    assert main(["apriori", "--profile", str(tmp_path / "none.dat")]) == 1
    assert "error:" in capsys.readouterr().err


def test_config_file_sets_defaults_and_flags_win(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("model = fv\nn = 32\nsynthetic = true\n")
    assert main(["apriori", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "model = fv" in out and "n = 32" in out
    assert main(["apriori", "--config", str(cfg), "--model", "gq-linear"]) == 0
    out = capsys.readouterr().out
    assert "model = gq-linear" in out and "n = 32" in out


def test_config_errors(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour = red\n")
    assert main(["apriori", "--config", str(cfg)]) == 2
    cfg.write_text("not a pair\n")
    assert main(["apriori", "--config", str(cfg)]) == 2
    assert main(["apriori", "--config", str(tmp_path / "missing.cfg")]) == 2


@pytest.mark.parametrize("argv", [[], ["nosuch"], ["apriori", "--bogus"], ["gradtest", "--mode", "sideways"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2


def test_gradtest_exit_codes(capsys):
    assert main(["gradtest", "--scenario", "rotated-juncture", "--mode", "naive"]) == 1
    assert main(["gradtest", "--scenario", "rotated-juncture", "--mode", "global-vector"]) == 0
    assert main(["gradtest", "--scenario", "tet-fan"]) == 1
    assert main(["gradtest", "--scenario", "tet-fan", "--filter-passes", "1"]) == 0
    rows = read_csv(out_dir() / "gradtest_tet-fan_naive.csv")
    assert rows[0][:2] == ["face_id", "mode"] and len(rows) == 26


def test_coupled_writes_csvs(tmp_path, capsys):
    series = tmp_path / "series.csv"
    assert main(["coupled", "--steps", "5", "--flow", "sinusoidal", "--output", str(series)]) == 0
    out = capsys.readouterr().out
    assert "stage_order = ok" in out
    rows = read_csv(series)
    assert tuple(rows[0]) == coupled.TIMESERIES_HEADER and len(rows) == 1 + 5 * 16
    ck = read_csv(out_dir() / "checkpoint.csv")
    assert tuple(ck[0]) == coupled.CHECKPOINT_HEADER and len(ck) == 17


def test_coupled_uniform_is_homogeneous(capsys):
    assert main(["coupled", "--steps", "20", "--iwm-legacy-sublayer"]) == 0
    assert "homogeneity_defect = 0.000e+00" in capsys.readouterr().out


def test_bench_writes_csv(capsys):
    assert main(["bench", "--models", "gq-clustered,fv", "--retau", "1000,10000", "--reps", "2"]) == 0
    rows = read_csv(out_dir() / "bench.csv")
    assert tuple(rows[0]) == bench.BENCH_HEADER and len(rows) == 5
    assert "fv_n_vs_re_slope" in capsys.readouterr().out


def test_console_script_entry_point(tmp_path):
    profile = tmp_path / "p.dat"
    write_profile(synthetic_reichardt(1000.0), profile)
    proc = subprocess.run(
        [sys.executable, "-m", "wallmodels.harness.cli", "apriori", "--model", "fv", "--profile", str(profile)],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert "result = pass" in proc.stdout


def test_same_seed_gives_identical_csv(tmp_path, capsys):
    outs = []
    for k in range(2):
        path = tmp_path / f"s{k}.csv"
        argv = ["coupled", "--steps", "4", "--flow", "sinusoidal", "--noise", "0.05", "--seed", "7", "--output", str(path)]
        assert main(argv) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    other = tmp_path / "s2.csv"
    assert main(["coupled", "--steps", "4", "--flow", "sinusoidal", "--noise", "0.05", "--seed", "8", "--output", str(other)]) == 0
    assert other.read_bytes() != outs[0]
