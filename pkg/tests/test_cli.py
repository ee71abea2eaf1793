import subprocess
import sys

import numpy as np
import pytest

from fss_surrogate import dataset as ds
from fss_surrogate.cli import (
    EXIT_CONFIG,
    EXIT_DIVERGED,
    EXIT_FORMAT,
    EXIT_INVALID,
    EXIT_IO,
    main,
    parse_geometry,
    to_db,
)
from fss_surrogate.pipeline import evaluate, PipelineConfig

SMALL = [
    "--set", "slot_count=2",
    "--set", "dist_count=2",
    "--set", "n_freq=40",
    "--set", "single_steps=300",
    "--set", "stack_steps=300",
    "--set", "mlp_steps=300",
    "--set", "hidden=16,16",
    "--threads", "1",
]


def run(out, *args):
    return main([*args, "--out", str(out), *SMALL])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    assert run(out, "gen-dataset") == 0
    assert run(out, "train") == 0
    assert run(out, "eval") == 0
    return out


def test_gen_dataset_files(workdir):
    g = (workdir / "geometry.csv").read_text().splitlines()
    assert g[0].startswith("# config_hash=") and g[0].endswith("seed=0")
    assert len(g) == 2 + 8
    r = (workdir / "response.csv").read_text().splitlines()
    assert len(r) == 2 + 8 * 40
    meta = ds.read_metadata(workdir / "metadata.txt")
    assert meta["oracle_fidelity"] == "3" and meta["n_freq"] == "40"


def test_default_sweep_size(tmp_path):
    assert main(["gen-dataset", "--out", str(tmp_path), "--set", "n_freq=2"]) == 0
    assert len(ds.read_geometries(tmp_path / "geometry.csv")) == 729


def test_single_point_sweep(tmp_path):
    assert main(["gen-dataset", "--out", str(tmp_path), "--set", "slot_count=1", "--set", "dist_count=1", "--set", "n_freq=5"]) == 0
    lines = [l for l in (tmp_path / "geometry.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(lines) == 2


def test_rerun_byte_identical(workdir, tmp_path):
    for cmd in ("gen-dataset", "train", "eval"):
        assert run(tmp_path, cmd) == 0
    for name in ("geometry.csv", "response.csv", "metadata.txt", "model.txt", "stage1_cache.txt", "eval.csv"):
        assert (tmp_path / name).read_bytes() == (workdir / name).read_bytes(), name


def test_train_reuses_stage1_cache(workdir, tmp_path, capsys):
    for name in ("geometry.csv", "response.csv", "metadata.txt", "stage1_cache.txt"):
        (tmp_path / name).write_bytes((workdir / name).read_bytes())
    capsys.readouterr()
    assert run(tmp_path, "train") == 0
    assert "reusing" in capsys.readouterr().out
    assert (tmp_path / "model.txt").read_bytes() == (workdir / "model.txt").read_bytes()


def test_threads_do_not_change_outputs(workdir, tmp_path):
    for name in ("geometry.csv", "response.csv", "metadata.txt"):
        (tmp_path / name).write_bytes((workdir / name).read_bytes())
    assert main(["train", "--out", str(tmp_path), *SMALL[:-2], "--threads", "2"]) == 0
    assert (tmp_path / "model.txt").read_bytes() == (workdir / "model.txt").read_bytes()


def test_seed_changes_header_and_split(workdir, tmp_path):
    for name in ("geometry.csv", "response.csv", "metadata.txt", "model.txt"):
        (tmp_path / name).write_bytes((workdir / name).read_bytes())
    assert run(tmp_path, "eval", "--seed", "5") == 0
    text = (tmp_path / "eval.csv").read_text()
    assert "seed=5" in text.splitlines()[0]
    assert text != (workdir / "eval.csv").read_text()


def test_eval_footer_matches_summary(workdir):
    lines = (workdir / "eval.csv").read_text().splitlines()
    assert lines[1] == "id,cost"
    footer = dict(kv.split("=") for kv in lines[-1].lstrip("# ").split()[1:])
    model = ds.read_model(workdir / "model.txt")
    samples = ds.read_dataset(workdir / "geometry.csv", workdir / "response.csv")
    _, test = ds.split(samples, 0.8, 0)
    summary = evaluate(model, test, PipelineConfig(n_freq=40).grid)
    assert float(footer["mean"]) == summary.mean
    assert float(footer["std"]) == summary.std
    assert footer["std_convention"] == "population"
    assert int(footer["n"]) == len(test) == 2


def test_predict(workdir):
    assert run(workdir, "predict", "--geometry", "11.3,12.7;9.1") == 0
    lines = (workdir / "predict.csv").read_text().splitlines()
    assert lines[1] == "freq_hz,s21_re,s21_im"
    vals = np.array([[float(x) for x in l.split(",")] for l in lines[2:]])
    assert vals.shape == (40, 3)
    assert np.all(np.hypot(vals[:, 1], vals[:, 2]) <= 1 + 1e-9)


def test_export_plot(workdir):
    assert run(workdir, "export-plot", "--ids", "0", "--extremes") == 0
    text = (workdir / "plot_0.csv").read_text().splitlines()
    assert text[1] == "freq_hz,s21_model_db,s21_model_deg,s21_goal_db,s21_goal_deg"
    rows = np.array([[float(x) for x in l.split(",")] for l in text[2:]])
    assert rows.shape == (40, 5)
    assert np.all(rows[:, 1] <= 1e-8) and np.all(np.abs(rows[:, 2]) <= 180)
    assert len(list(workdir.glob("plot_*.csv"))) >= 2


def test_fit_pit_sample(workdir):
    assert run(workdir, "fit-pit", "--sample-id", "3") == 0
    lines = (workdir / "fit_report_sample3.csv").read_text().splitlines()
    assert lines[2] == "Parameter,Initial,Final,Variation(%)"
    assert len(lines) == 3 + 9


def test_fit_pit_four_screen_geometry(tmp_path):
    code = main(["fit-pit", "--geometry", "14.91,14.80,14.75,14.88;10.3,8.79,10.3", "--out", str(tmp_path), "--threads", "1"])
    assert code == 0
    lines = (tmp_path / "fit_report_geometry.csv").read_text().splitlines()
    costs = dict(kv.split("=") for kv in lines[1].lstrip("# ").split())
    assert float(costs["final_cost"]) < float(costs["initial_cost"]) / 5
    rows = lines[3:]
    assert len(rows) == 19
    assert rows[0].startswith("L0_1 (H),") and rows[-1].startswith("d_3 (mm),")


def test_db_conversion():
    assert to_db(1.0) == 0.0
    assert to_db(0.5) == pytest.approx(-6.0206, abs=1e-4)
    assert to_db(-0.5j) == pytest.approx(-6.0206, abs=1e-4)


def test_parse_geometry():
    g = parse_geometry("14.91,14.8;10.3")
    assert g.slot_lengths == pytest.approx((14.91e-3, 14.8e-3)) and g.distances == pytest.approx((10.3e-3,))


class TestExitCodes:
    def test_config_errors(self, tmp_path):
        assert main(["gen-dataset", "--out", str(tmp_path), "--set", "period_mm=-1"]) == EXIT_CONFIG
        assert main(["gen-dataset", "--out", str(tmp_path), "--set", "bogus=1"]) == EXIT_CONFIG
        assert main(["gen-dataset", "--out", str(tmp_path), "--set", "f_max_hz=20e9"]) == EXIT_CONFIG
        assert main(["gen-dataset", "--out", str(tmp_path), "--set", "slot_count=0"]) == EXIT_CONFIG

    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# small\nslot_count = 1\ndist_count = 1\nn_freq = 7\n")
        assert main(["gen-dataset", "--out", str(tmp_path), "--config", str(cfg), "--set", "n_freq=9"]) == 0
        assert len(ds.read_dataset(tmp_path / "geometry.csv", tmp_path / "response.csv")[0].freqs) == 9
        cfg.write_text("slot_count 1\n")
        assert main(["gen-dataset", "--out", str(tmp_path), "--config", str(cfg)]) == EXIT_CONFIG

    def test_missing_files(self, tmp_path):
        assert main(["train", "--out", str(tmp_path)]) == EXIT_IO
        assert main(["eval", "--out", str(tmp_path)]) == EXIT_IO

    def test_format_error(self, workdir, tmp_path):
        for name in ("geometry.csv", "response.csv", "metadata.txt"):
            (tmp_path / name).write_bytes((workdir / name).read_bytes())
        (tmp_path / "model.txt").write_text("format_version 1\nlayer_sizes 3 x\n")
        assert run(tmp_path, "eval") == EXIT_FORMAT
        with open(tmp_path / "response.csv", "a") as fh:
            fh.write("garbage\n")
        assert run(tmp_path, "train") == EXIT_FORMAT

    def test_metadata_mismatch(self, workdir, tmp_path):
        for name in ("geometry.csv", "response.csv", "metadata.txt"):
            (tmp_path / name).write_bytes((workdir / name).read_bytes())
        assert main(["train", "--out", str(tmp_path), *SMALL, "--set", "perturbation=0.05"]) == EXIT_CONFIG

    def test_unknown_id(self, workdir):
        assert run(workdir, "fit-pit", "--sample-id", "999") == EXIT_INVALID
        assert run(workdir, "export-plot", "--ids", "999") == EXIT_INVALID

    def test_divergence_code_is_distinct(self):
        assert len({EXIT_INVALID, EXIT_CONFIG, EXIT_FORMAT, EXIT_DIVERGED, EXIT_IO, 0}) == 6


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "fss_surrogate.cli", "gen-dataset", "--out", str(tmp_path), "--set", "slot_count=1", "--set", "dist_count=1", "--set", "n_freq=3"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
