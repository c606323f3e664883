"""
測試 CLI：四個動詞的輸出檔與結束碼
"""
import json

import pandas as pd
import pytest

import cli_experiments
from errors import AcceptanceError, NumericError
from experiment_agent import ExperimentAgent

TINY_PATHS = {
    "paths": {"horizons": [2.0], "spacings": [0.5, 1.0], "alpha": 3},
    "seeds": [0],
}

TINY_ESTIMATION = {
    "functional": {"kind": "quadratic", "theta_bounds": [[-60.0, 60.0]]},
    "optimizer": {"grid_points": 16},
    "estimation": {
        "ns": [20, 40], "alpha": 5, "oracle_B": 5, "oracle_n": 50, "oracle_grid_points": 9,
        "alpha_pair": [2, 3], "variance_n": 20, "variance_seeds": 3,
    },
    "seeds": [0, 1, 2],
}


def write_config(tmp_path, data):
    target = tmp_path / "config.json"
    target.write_text(json.dumps(data), encoding="utf-8")
    return str(target)


def run(tmp_path, verb, data, out="out", *extra):
    return cli_experiments.main([verb, "--config", write_config(tmp_path, data), "--out", str(tmp_path / out), *extra])


def test_simulate_paths_writes_every_cell(tmp_path):
    assert run(tmp_path, "simulate-paths", TINY_PATHS) == 0
    root = tmp_path / "out" / "paths"
    observed = pd.read_csv(root / "T2_h0.5" / "observed.csv")
    assert len(observed) == 5
    assert sorted(p.name for p in (root / "T2_h0.5").glob("*.csv")) == [
        "observed.csv", "oracle_000.csv", "oracle_001.csv", "oracle_002.csv",
        "quasi_000.csv", "quasi_001.csv", "quasi_002.csv"]
    oracle = pd.read_csv(root / "T2_h0.5" / "oracle_000.csv")
    assert len(oracle) == 5 and oracle["value"].iloc[0] == observed["value"].iloc[0]
    cells = pd.read_csv(root / "cells.csv")
    assert cells["n"].tolist() == [4, 2]
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["verb"] == "simulate-paths" and len(manifest["config_hash"]) == 64
    assert (root / "plot_paths.py").exists()


def test_identity_permutation_reproduces_observed_path(tmp_path):
    data = {**TINY_PATHS, "paths": {**TINY_PATHS["paths"], "identity_permutation": True}}
    assert run(tmp_path, "simulate-paths", data) == 0
    cell = tmp_path / "out" / "paths" / "T2_h0.5"
    observed = (cell / "observed.csv").read_bytes()
    for i in range(3):
        assert (cell / f"quasi_{i:03d}.csv").read_bytes() == observed
    assert (cell / "oracle_000.csv").read_bytes() != observed


def test_reruns_are_bit_identical(tmp_path):
    assert run(tmp_path, "simulate-paths", TINY_PATHS, "first") == 0
    assert run(tmp_path, "simulate-paths", TINY_PATHS, "second", "--jobs", "2") == 0
    for name in ("observed.csv", "quasi_000.csv", "quasi_002.csv"):
        first = (tmp_path / "first" / "paths" / "T2_h1" / name).read_bytes()
        assert first == (tmp_path / "second" / "paths" / "T2_h1" / name).read_bytes()


def test_seed_flag_changes_the_paths(tmp_path):
    assert run(tmp_path, "simulate-paths", TINY_PATHS, "a") == 0
    assert run(tmp_path, "simulate-paths", TINY_PATHS, "b", "--seed", "7") == 0
    a = (tmp_path / "a" / "paths" / "T2_h0.5" / "observed.csv").read_bytes()
    b = (tmp_path / "b" / "paths" / "T2_h0.5" / "observed.csv").read_bytes()
    assert a != b


def test_marginals_for_deterministic_model(tmp_path):
    data = {
        "model": {"mu": 1.0, "sigma": 0.0, "lam": 0.0},
        "marginals": {"cells": [[2.0, 0.5]], "t": 1.0, "alpha": 10, "oracle_B": 10, "ruin_xi": -1.0,
                      "lp_ns": [100, 400], "lp_replications": 20},
        "seeds": [0, 1],
    }
    assert run(tmp_path, "marginals", data) == 0
    root = tmp_path / "out" / "marginals"
    table = pd.read_csv(root / "ks_table.csv")
    assert set(table["metric"]) == {"ks_marginal", "ks_ruin_time"}
    assert (table["value"] == 0.0).all()
    assert not list(root.glob("kde_*.csv"))
    assert (root / "ks_summary.csv").exists()
    lp = pd.read_csv(root / "lp_table.csv")
    distances = lp[lp["metric"] == "lp2_distance"]
    assert len(distances) == 4 and (distances["value"] == 0.0).all()
    assert lp[lp["metric"] == "lp_decay_rate"]["value"].isna().all()


def test_marginals_write_kde_curves(tmp_path):
    data = {"marginals": {"cells": [[5.0, 0.5]], "t": 1.0, "alpha": 50, "oracle_B": 50,
                          "lp_ns": [100, 400], "lp_replications": 50}, "seeds": [3]}
    assert run(tmp_path, "marginals", data) == 0
    root = tmp_path / "out" / "marginals"
    assert (root / "kde_quasi_T5_h0.5.csv").exists()
    assert (root / "kde_oracle_T5_h0.5.csv").exists()
    lp = pd.read_csv(root / "lp_table.csv")
    assert set(lp["metric"]) == {"lp2_distance", "l2_exact", "lp_decay_rate"}
    rate = lp.loc[lp["metric"] == "lp_decay_rate", "value"]
    assert len(rate) == 1 and rate.notna().all()


def test_estimate_with_quadratic_loss(tmp_path):
    assert run(tmp_path, "estimate", TINY_ESTIMATION) == 0
    root = tmp_path / "out" / "estimation"
    oracle = json.loads((root / "oracle.json").read_text(encoding="utf-8"))
    assert set(oracle) >= {"theta_hat", "contrast_at_min", "grid_spacing", "margin"}
    estimates = pd.read_csv(root / "estimates.csv")
    assert len(estimates) == 6
    assert set(estimates["n"]) == {20, 40}
    assert (estimates["theta_0"].abs() <= 60.0).all()
    assert (root / "n20_seed0.json").exists()
    assert pd.read_csv(root / "alpha_std.csv")["alpha"].tolist() == [2, 3]
    for name in ("sigma.csv", "error_summary.csv", "qq.csv", "plot_estimation.py", "manifest.json"):
        assert (root / name).exists()


def test_check_only_exhaustive(tmp_path):
    assert run(tmp_path, "check", {"seeds": [0]}, "out", "--only", "exhaustive") == 0
    results = pd.read_csv(tmp_path / "out" / "check" / "results.csv")
    assert results["check"].tolist() == ["exhaustive"]
    assert bool(results["passed"].iloc[0])


def test_config_errors_exit_2(tmp_path):
    assert cli_experiments.main(["marginals", "--config", str(tmp_path / "missing.json")]) == 2
    assert run(tmp_path, "marginals", {"marginals": {"alpha": 0}}) == 2


def test_numeric_errors_exit_3(tmp_path, monkeypatch):
    def boom(self):
        raise NumericError("contrast is NaN")

    monkeypatch.setattr(ExperimentAgent, "run_paths", boom)
    assert run(tmp_path, "simulate-paths", TINY_PATHS) == 3


def test_acceptance_failures_exit_4(tmp_path, monkeypatch):
    def fail(self, only=None):
        raise AcceptanceError("failed checks: moments")

    monkeypatch.setattr(ExperimentAgent, "run_check", fail)
    assert run(tmp_path, "check", {"seeds": [0]}) == 4


def test_unknown_verb_is_rejected():
    with pytest.raises(SystemExit):
        cli_experiments.main(["plot"])
