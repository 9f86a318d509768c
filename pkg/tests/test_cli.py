"""Tests for the experiment harness: config parsing, outputs, determinism."""

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from fracvol.cli import (
    ExperimentConfig,
    main,
    price_single,
    run_gamma_sweep,
    run_table,
    run_validate_processes,
    sweep_csv_lines,
    table_csv_lines,
    table_plot_lines,
)
from fracvol.errors import ConfigError


def _toy_table_config(experiment, seed=11, paths=4000, steps=8, jobs=1):
    return ExperimentConfig.from_mapping({
        "experiment": experiment,
        "mc": {"n_paths": paths, "n_steps": steps, "seed": seed},
        "jobs": jobs,
    })


# ---------------------------------------------------------------------------
# configuration


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown configuration keys"):
        ExperimentConfig.from_mapping({"experiment": "table2", "alpa": 1.0})


def test_unknown_nested_keys_rejected():
    with pytest.raises(ConfigError, match="unknown mc keys"):
        ExperimentConfig.from_mapping({"experiment": "table2",
                                       "mc": {"n_path": 100}})
    with pytest.raises(ConfigError, match="unknown approx keys"):
        ExperimentConfig.from_mapping({"experiment": "table2",
                                       "approx": {"nz": 100}})
    with pytest.raises(ConfigError, match="unknown model override"):
        ExperimentConfig.from_mapping({"experiment": "table2",
                                       "overrides": {"alpha_": 2}})


def test_unknown_experiment_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"experiment": "table9"})


def test_defaults_fill_omitted_fields():
    cfg = ExperimentConfig.from_mapping({"experiment": "price_single"})
    assert cfg.mc.n_paths == 100_000
    assert cfg.mc.n_steps == 256
    assert cfg.approx.n_z == 513
    assert cfg.format == "csv"


# ---------------------------------------------------------------------------
# table runner


@pytest.fixture(scope="module")
def toy_table2():
    return run_table(_toy_table_config("table2"))


def test_table2_shape_and_reference_column(toy_table2):
    result = toy_table2
    assert len(result.cells) == 4 * 5 * 10
    cell = next(c for c in result.cells
                if c.model == "FOU_H09" and c.alpha == 0.5 and c.strike == 50.0)
    assert cell.reference == pytest.approx(19.21)
    cell5 = next(c for c in result.cells
                 if c.model == "BS" and c.alpha == 2.5 and c.strike == 5.0)
    assert cell5.reference == pytest.approx(0.08)
    assert cell5.closed_form == pytest.approx(47.4, abs=0.01)
    assert cell5.flag == "DISCREPANT_VS_REFERENCE"


def test_table2_metadata_complete(toy_table2):
    for c in toy_table2.cells:
        assert c.seed > 0 and c.n_paths > 0 and c.n_steps > 0
    md = toy_table2.metadata
    assert {"master_seed", "n_paths", "n_steps", "wall_time_s"} <= set(md)


def test_table_csv_deterministic_across_jobs_and_runs():
    lines_a = table_csv_lines(run_table(_toy_table_config("table2", jobs=1)))
    lines_b = table_csv_lines(run_table(_toy_table_config("table2", jobs=2)))
    assert lines_a == lines_b


def test_table_csv_has_raw_columns(toy_table2):
    lines = table_csv_lines(toy_table2)
    header = lines[0].split(",")
    assert "price_raw" in header and "stderr_raw" in header
    row = lines[1].split(",")
    raw = float(row[header.index("price_raw")])
    disp = float(row[header.index("price")])
    assert raw == pytest.approx(disp, rel=1e-5)


def test_plot_data_blocks(toy_table2):
    lines = table_plot_lines(toy_table2)
    blocks = "\n".join(lines).split("\n\n\n")
    assert len(blocks) == 4 * 5
    first = blocks[0].splitlines()
    data = [l for l in first if l and not l.startswith("#")]
    assert len(data) == 10
    assert len(data[0].split()) == 4


def test_table5_small_gamma_check_runs():
    result = run_table(_toy_table_config("table5", paths=2000))
    assert "near_identical_small_gamma_columns" in result.checks


def test_table3_spread_check():
    result = run_table(_toy_table_config("table3", paths=20_000, steps=16))
    check = result.checks["strike_spread_shrinks_with_horizon"]
    assert check["passed"], check


# ---------------------------------------------------------------------------
# gamma sweep


def test_gamma_sweep_inconclusive_at_tiny_budget():
    cfg = ExperimentConfig.from_mapping({
        "experiment": "gamma_sweep",
        "preset": "FOU_H07",
        "overrides": {"mu": 0.05, "rho": -0.5},
        "mc": {"n_paths": 20_000, "n_steps": 32, "seed": 3},
        "gamma_grid": [0.1, 0.05],
        "max_paths": 40_000,
        "approx": {"n_z": 129, "n_t": 65},
    })
    result = run_gamma_sweep(cfg)
    assert result.inconclusive
    assert result.slope is None
    assert not result.passed
    lines = sweep_csv_lines(result)
    assert lines[-1] == "# inconclusive,1"


def test_gamma_sweep_zero_row_exact():
    cfg = ExperimentConfig.from_mapping({
        "experiment": "gamma_sweep",
        "preset": "FOU_H07",
        "mc": {"n_paths": 2_000, "n_steps": 16, "seed": 3},
        "gamma_grid": [0.0],
        "max_paths": 4_000,
        "approx": {"n_z": 129, "n_t": 65},
    })
    result = run_gamma_sweep(cfg)
    row = result.rows[0]
    assert row.conclusive
    assert abs(row.gap) < 1e-5
    assert result.passed


def test_gamma_sweep_coupled_and_plain_estimators_consistent():
    base = {
        "experiment": "gamma_sweep",
        "preset": "FOU_H07",
        "overrides": {"mu": 0.05, "rho": -0.5},
        "mc": {"n_paths": 100_000, "n_steps": 32, "seed": 5},
        "gamma_grid": [0.2],
        "max_paths": 100_000,
        "approx": {"n_z": 129, "n_t": 65},
    }
    coupled = run_gamma_sweep(ExperimentConfig.from_mapping(base))
    plain = run_gamma_sweep(ExperimentConfig.from_mapping(
        {**base, "sweep_estimator": "plain"}
    ))
    a, b = coupled.rows[0], plain.rows[0]
    tol = 3.0 * math.hypot(a.mc_stderr, b.mc_stderr)
    assert abs(a.mc_price - b.mc_price) < tol
    assert a.mc_stderr < b.mc_stderr  # the coupling is what buys resolution


# ---------------------------------------------------------------------------
# validation and single price


def test_validate_processes_passes_at_reduced_scale():
    cfg = ExperimentConfig.from_mapping({
        "experiment": "validate_processes",
        "validate_paths": 30_000,
        "mc": {"seed": 2},
    })
    checks = run_validate_processes(cfg)
    failed = [c.name for c in checks if not c.passed]
    assert failed == []
    names = {c.name for c in checks}
    assert "pricing_rejects_short_memory" in names
    assert any(n.startswith("fbm_covariance") for n in names)


def test_price_single_bs_consistency():
    cfg = ExperimentConfig.from_mapping({
        "experiment": "price_single",
        "preset": "BS",
        "alpha": 0.5,
        "mc": {"n_paths": 40_000, "n_steps": 16, "seed": 1},
    })
    out = price_single(cfg)
    assert abs(out["mc_price"] - out["approx_price"]) < 3.0 * out["mc_stderr"]
    assert out["approx_price"] == pytest.approx(9.870632568292372, rel=1e-9)


def test_price_single_with_correctors_and_literal_flag():
    cfg = ExperimentConfig.from_mapping({
        "experiment": "price_single",
        "preset": "FOU_H07",
        "overrides": {"gamma": 0.1, "rho": -0.5},
        "mc": {"n_paths": 20_000, "n_steps": 32, "seed": 1},
        "approx": {"n_z": 129, "n_t": 65, "literal_step2": True},
    })
    out = price_single(cfg)
    assert out["approx_price"] is not None
    assert "residual_linf" in out
    assert out["literal_route_feeds_price"] is False
    assert out["m2_literal_at_spot"] != pytest.approx(out["m2_duhamel_at_spot"],
                                                      rel=0.05)


# ---------------------------------------------------------------------------
# process-level CLI (exit codes, files)


def _run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "fracvol.cli", *args],
        capture_output=True, text=True, cwd=cwd,
    )


def test_cli_exit_codes_and_outputs(tmp_path):
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text(json.dumps({"unknown_key": 1}))
    r = _run_cli(["price", "--config", str(bad_cfg)], tmp_path)
    assert r.returncode == 2

    r = _run_cli([
        "price", "--preset", "BS", "--alpha", "0.5",
        "--paths", "4000", "--steps", "8", "--seed", "3",
        "--out", "p.json",
    ], tmp_path)
    assert r.returncode == 0, r.stderr
    data = json.loads((tmp_path / "p.json").read_text())
    assert "mc_price" in data and "approx_price" in data


def test_cli_table_byte_identical(tmp_path):
    args = ["table3", "--paths", "2000", "--steps", "8", "--seed", "7",
            "--out", "a.csv"]
    r1 = _run_cli(args, tmp_path)
    assert r1.returncode == 0, r1.stderr
    first = (tmp_path / "a.csv").read_bytes()
    r2 = _run_cli([*args[:-1], "b.csv", "--jobs", "2"], tmp_path)
    assert r2.returncode == 0, r2.stderr
    second = (tmp_path / "b.csv").read_bytes()
    assert first == second
    assert (tmp_path / "a.csv.plot.dat").exists()


def test_cli_validate_exit_zero(tmp_path):
    r = _run_cli(["validate", "--paths", "20000", "--seed", "4",
                  "--out", "v.txt"], tmp_path)
    assert r.returncode == 0, r.stderr
    assert "PASS" in r.stdout
