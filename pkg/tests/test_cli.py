import csv
import json
import subprocess
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from ktpfl.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from ktpfl.config import config_from_dict, emit_config
from ktpfl.errors import ConfigError
from ktpfl.experiment import METRICS_HEADER, compare_runs, format_table, write_table_csv
from ktpfl.knowledge import check_column_stochastic, read_coefficients_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(emit_config(cfg), encoding="utf-8")
    return path


def test_smoke_config_runs_fast(tmp_path):
    start = time.perf_counter()
    code = main(["run", str(CONFIGS / "smoke.yaml"), "--output-dir", str(tmp_path / "out")])
    assert code == EXIT_OK
    assert time.perf_counter() - start < 10
    out = tmp_path / "out"
    with open(out / "metrics.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == METRICS_HEADER
    assert len(rows) == 1 + 3 * 4
    snaps = sorted((out / "coefficients").iterdir())
    assert [p.name for p in snaps] == ["round_0001.csv", "round_0002.csv", "round_0003.csv"]
    check_column_stochastic(read_coefficients_csv(snaps[-1]), tol=1e-7)


def test_summary_contains_effective_config(tmp_path, tiny_config):
    cfg = tiny_config()
    assert main(["run", str(write_config(tmp_path, cfg)), "--output-dir", str(tmp_path / "o"), "--seed", "5"]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["seed"] == 5 and summary["config"]["seed"] == 5
    assert summary["config"]["train"]["local_epochs"] == cfg.train.local_epochs
    assert summary["config"]["output_dir"] == str(tmp_path / "o")
    assert config_from_dict(summary["config"]).train == cfg.train
    for key in ("final_avg_accuracy", "best_avg_accuracy", "bytes_by_kind", "dataset_fingerprint"):
        assert key in summary
    assert "runtime" not in json.dumps(summary)


def test_repeat_run_is_byte_identical(tmp_path, tiny_config):
    path = write_config(tmp_path, tiny_config())
    for d in ("a", "b"):
        assert main(["run", str(path), "--output-dir", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    a, b = (json.loads((tmp_path / d / "summary.json").read_text()) for d in ("a", "b"))
    a["config"].pop("output_dir"), b["config"].pop("output_dir")
    assert a == b


def test_local_only_emits_no_traffic(tmp_path, tiny_config):
    path = write_config(tmp_path, tiny_config(algorithm="local"))
    assert main(["run", str(path), "--output-dir", str(tmp_path / "o")]) == 0
    with open(tmp_path / "o" / "metrics.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert all(r["up_bytes"] == "0" and r["down_bytes"] == "0" for r in rows)
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["total_up_bytes"] == summary["total_down_bytes"] == 0


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("algorithm: ktpfl\nmodel_groups: [{count: 2}]\nnum_clients: 3\n")
    assert main(["run", str(bad)]) == EXIT_CONFIG
    assert "model_groups" in capsys.readouterr().err


def test_runtime_error_exit_code(tmp_path, tiny_config, capsys):
    # validates, but the public pool cannot be carved from this little data
    cfg = tiny_config(public={"size": 5000})
    code = main(["run", str(write_config(tmp_path, cfg)), "--output-dir", str(tmp_path / "o")])
    assert code in (EXIT_CONFIG, EXIT_RUNTIME) and code != EXIT_OK
    cfg = tiny_config(dataset={"kind": "idx", "images": str(tmp_path / "x"), "labels": str(tmp_path / "y")})
    assert main(["run", str(write_config(tmp_path, cfg)), "--output-dir", str(tmp_path / "o")]) == EXIT_RUNTIME
    assert "runtime error" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ktpfl", "compare", "only-one.json"], capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG


# ---- compare ----

def fake_summary(alg, acc, seed=0, fingerprint="f"):
    return {"algorithm": alg, "seed": seed, "final_avg_accuracy": acc, "best_avg_accuracy": acc + 0.01,
            "total_up_bytes": 100, "total_down_bytes": 50, "dataset_fingerprint": fingerprint}


def test_compare_two_algorithms_has_delta_column():
    rows = compare_runs([fake_summary("ktpfl", 0.80), fake_summary("fedmd", 0.75)])
    assert [r["algorithm"] for r in rows] == ["ktpfl", "fedmd"]
    assert rows[1]["delta_final"] == pytest.approx(-0.05)
    table = format_table(rows)
    assert "delta final" in table and "-5.00" in table


def test_compare_three_seeds_mean_std():
    accs = [0.70, 0.74, 0.81]
    rows = compare_runs([fake_summary("ktpfl", a, s) for s, a in enumerate(accs)])
    assert len(rows) == 1 and rows[0]["runs"] == 3
    mean = sum(accs) / 3
    std = (sum((a - mean) ** 2 for a in accs) / 2) ** 0.5
    assert rows[0]["final_acc_mean"] == pytest.approx(mean)
    assert rows[0]["final_acc_std"] == pytest.approx(std)
    assert f"{100 * mean:.2f} ± {100 * std:.2f}" in format_table(rows)


def test_compare_single_input_errors():
    with pytest.raises(ConfigError, match="at least 2"):
        compare_runs([fake_summary("ktpfl", 0.8)])


def test_compare_fingerprint_mismatch_warns():
    with pytest.warns(UserWarning, match="different tasks"):
        rows = compare_runs([fake_summary("a", 0.5, fingerprint="x"), fake_summary("b", 0.6, fingerprint="y")])
    assert len(rows) == 2


def test_compare_cli_writes_csv(tmp_path, capsys):
    paths = []
    for i, (alg, acc) in enumerate([("ktpfl", 0.8), ("fedmd", 0.7)]):
        p = tmp_path / f"s{i}.json"
        p.write_text(json.dumps(fake_summary(alg, acc)))
        paths.append(str(p))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert main(["compare", *paths, "--csv", str(tmp_path / "t.csv")]) == 0
    assert "ktpfl" in capsys.readouterr().out
    with open(tmp_path / "t.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["algorithm"] for r in rows] == ["ktpfl", "fedmd"]
    assert float(rows[1]["delta_final"]) == pytest.approx(-0.1)


def test_compare_missing_file_is_config_error(tmp_path):
    assert main(["compare", str(tmp_path / "a.json"), str(tmp_path / "b.json")]) == EXIT_CONFIG


def test_write_table_csv_columns(tmp_path):
    rows = compare_runs([fake_summary("a", 0.5), fake_summary("b", 0.6)])
    write_table_csv(tmp_path / "t.csv", rows)
    header = (tmp_path / "t.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "algorithm" and "final_acc_std" in header
    assert np.isclose(rows[1]["delta_final"], 0.1)
