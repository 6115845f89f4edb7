import csv
import json

import numpy as np
import pytest

from dyadic_bloom.cli import main
from dyadic_bloom.experiments import (
    ConfigError,
    ExperimentConfig,
    random_symbol,
    run_bmo_equiv,
    run_identities,
    run_sweep,
)
from dyadic_bloom.grid import make_grid
from dyadic_bloom.haar import analyze


def write_cfg(tmp_path, d, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(d))
    return str(path)


# -- config -------------------------------------------------------------------------

def test_config_defaults_and_roundtrip():
    cfg = ExperimentConfig()
    assert (cfg.n, cfg.K, cfg.trials, cfg.format) == (1, 4, 50, "csv")
    d = json.loads(json.dumps(cfg.to_dict()))
    assert set(d["grid"]) == {"n", "K", "shift"}
    assert ExperimentConfig.from_dict(d) == cfg


def test_config_nested_values(tmp_path):
    path = write_cfg(tmp_path, {
        "grid": {"n": 2, "K": 3, "shift": [0.25, 0.0]},
        "p": 1.5,
        "weight": {"kind": "uniform"},
        "symbol": {"decay": 0.5, "normalize": True},
        "shift_spec": {"pairs": [[1, 2], [0, 0]], "density": 0.5},
        "depths": [2, 3],
    })
    cfg = ExperimentConfig.load(path)
    assert cfg.grid().n == 2 and cfg.all_depths == [2, 3]
    assert cfg.pairs() == [(1, 2), (0, 0)]
    assert cfg.symbol.normalize and cfg.weight.kind == "uniform"


@pytest.mark.parametrize("bad", [
    {"bogus": 1},
    {"grid": {"n": 1, "depth": 3}},
    {"weight": {"kind": "gaussian"}},
    {"weight": {"ratio": 2}},
    {"p": 1.0},
    {"trials": 0},
    {"tol": -1},
    {"format": "xml"},
    {"grid": {"n": 0}},
    {"shift_spec": {"density": 0}},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_config_load_errors(tmp_path):
    bad = tmp_path / "x.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(bad)
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(bad)


def test_random_symbol_nested_and_decaying():
    s3 = random_symbol(make_grid(1, 3), np.random.default_rng(0))
    s4 = random_symbol(make_grid(1, 4), np.random.default_rng(0))
    assert abs(s4.mean()) < 1e-14
    c3, c4 = analyze(s3), analyze(s4)
    for k in range(3):
        assert np.allclose(c3.levels[k], c4.levels[k], atol=1e-13)


# -- runners -------------------------------------------------------------------------

def test_identities_default_config_all_pass():
    records, summary = run_identities(ExperimentConfig())
    assert summary["violations"] == 0
    assert {r["suite"] for r in records} == {"haar", "avg-difference", "product", "adjoint",
                                             "remainder", "noncancellative"}
    assert all({"module", "operation", "instance"} <= set(r) for r in records)


def test_identities_n2():
    cfg = ExperimentConfig(n=2, K=3, trials=5)
    records, summary = run_identities(cfg)
    assert summary["violations"] == 0
    # Gamma is present and nontrivial on this grid, so its adjoint check is meaningful
    assert any(r["check"] == "adjoint-Gamma" for r in records)
    assert not any(r["check"] == "gamma-vanishes-1d" for r in records)


def test_bmo_equiv_constant_symbol_gives_zero_row():
    from dyadic_bloom.experiments import SymbolSpec

    cfg = ExperimentConfig(K=3, trials=2, symbol=SymbolSpec(scale=0.0))
    records, summary = run_bmo_equiv(cfg)
    for r in records:
        assert all(v == 0 for k, v in r.items() if k.startswith("q_"))
    assert summary["mixed_zero_instances"] == 0


def test_bmo_equiv_unweighted():
    from dyadic_bloom.experiments import WeightSpec

    cfg = ExperimentConfig(K=3, trials=3, weight=WeightSpec(kind="uniform"))
    records, _ = run_bmo_equiv(cfg)
    for r in records:
        assert r["ap_mu"] == pytest.approx(1.0) and r["ap_lam"] == pytest.approx(1.0)
        # at p = 2 with unit weights B1 and B2 are both the unweighted BMO^2 norm
        assert r["q_b1"] == pytest.approx(r["q_bmo2_nu"], rel=1e-12)
        assert r["q_b2"] == pytest.approx(r["q_bmo2_nu"], rel=1e-12)
        assert r["q_bmo_nu"] <= r["q_bmo2_nu"] * (1 + 1e-12)


def test_bmo_equiv_depth_stability():
    cfg = ExperimentConfig(trials=20, depths=[3, 4, 5])
    _, summary = run_bmo_equiv(cfg)
    by = summary["by_depth"]
    for key in ("bmo2_nu/bmo_nu", "pi_lp/bmo2_nu", "b1/bmo_nu"):
        maxima = [by[str(K)][key]["max"] for K in (3, 4, 5)]
        assert max(maxima) / min(maxima) <= 2


def test_sweep_zero_symbol_has_zero_lhs():
    from dyadic_bloom.experiments import SymbolSpec

    cfg = ExperimentConfig(K=3, trials=6, symbol=SymbolSpec(scale=0.0))
    for target in ("paraproduct", "commutator", "lambda"):
        reports, _ = run_sweep(cfg, target)
        assert all(r["lhs"] == 0 for r in reports[0].rows)
        assert all(r["ratio"] == 0 for r in reports[0].rows)


def test_sweep_commutator_and_lambda_bounded():
    cfg = ExperimentConfig(K=4, trials=20)
    reports, summary = run_sweep(cfg, "commutator")
    assert {(r["i"], r["j"]) for r in reports[0].rows} >= {(2, 2), (0, 0)}
    assert np.isfinite(summary["max_ratio"]) and summary["max_ratio"] > 0
    reports, summary = run_sweep(cfg, "lambda")
    assert {r["variant"] for r in reports[0].rows} == {"Lambda", "LambdaStar"}
    assert np.isfinite(summary["max_ratio"])


def test_sweep_unknown_target():
    with pytest.raises(ConfigError):
        run_sweep(ExperimentConfig(), "bogus")


def test_sweep_depth_too_shallow_for_pairs():
    from dyadic_bloom.experiments import ShiftSpec

    with pytest.raises(ConfigError):
        run_sweep(ExperimentConfig(K=1, trials=1, shift_op=ShiftSpec(i=2, j=2)), "commutator")


# -- CLI -------------------------------------------------------------------------------

def test_cli_identities_exit_codes(tmp_path, capsys):
    assert main(["identities", "--out", str(tmp_path / "a"), "--trials", "5"]) == 0
    assert (tmp_path / "a" / "identities.jsonl").exists()
    summary = json.loads((tmp_path / "a" / "identities_summary.json").read_text())
    assert summary["violations"] == 0
    assert main(["identities", "--out", str(tmp_path / "b"), "--trials", "5", "--tol", "0"]) == 1
    assert main(["identities", "--out", str(tmp_path / "c"), "--trials", "3",
                 "--dim", "2", "--depth", "3"]) == 0


def test_cli_usage_errors(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["sweep", "--target", "bogus", "--out", out]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["identities", "--config", write_cfg(tmp_path, {"oops": 1}), "--out", out]) == 2
    assert main(["identities", "--suite", "nope", "--out", out]) == 2
    assert main(["identities", "--p", "0.5", "--out", out]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, {"grid": {"n": 1, "K": 3}, "trials": 6, "seed": 5})
    for d in ("x", "y"):
        assert main(["sweep", "--target", "commutator", "--config", cfg, "--out", str(tmp_path / d)]) == 0
        assert main(["identities", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for name in ("sweep_commutator_K3.csv", "sweep_commutator.jsonl", "sweep_commutator_summary.json",
                 "identities.jsonl"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


def test_cli_jobs_do_not_change_output(tmp_path):
    args = ["sweep", "--target", "paraproduct", "--trials", "8", "--depth", "3"]
    assert main(args + ["--out", str(tmp_path / "s")]) == 0
    assert main(args + ["--out", str(tmp_path / "t"), "--jobs", "4"]) == 0
    a = (tmp_path / "s" / "sweep_paraproduct_K3.csv").read_bytes()
    assert a == (tmp_path / "t" / "sweep_paraproduct_K3.csv").read_bytes()


def test_cli_bmo_equiv_outputs(tmp_path):
    out = tmp_path / "e"
    assert main(["bmo-equiv", "--trials", "3", "--depth", "3", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "bmo_equiv.csv")))
    assert len(rows) == 3 and float(rows[0]["q_bmo_nu"]) > 0
    assert main(["bmo-equiv", "--trials", "2", "--depth", "3", "--format", "json", "--out", str(out)]) == 0
    assert len(json.loads((out / "bmo_equiv.json").read_text())) == 2
    for line in (out / "bmo_equiv.jsonl").read_text().splitlines():
        rec = json.loads(line)
        assert {"module", "operation", "instance"} <= set(rec)


def test_cli_sweep_json_format_and_depths(tmp_path):
    out = tmp_path / "j"
    assert main(["sweep", "--target", "shift-norm", "--trials", "4", "--depths", "2", "3",
                 "--format", "json", "--out", str(out)]) == 0
    assert json.loads((out / "sweep_shift-norm_K2.json").read_text())
    summary = json.loads((out / "sweep_shift-norm_summary.json").read_text())
    assert summary["depths"] == [2, 3] and len(summary["depth_growth"]) == 1


def test_cli_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DYADIC_BLOOM_OUT", str(tmp_path / "env"))
    assert main(["identities", "--trials", "2", "--suite", "haar"]) == 0
    assert (tmp_path / "env" / "identities.jsonl").exists()
