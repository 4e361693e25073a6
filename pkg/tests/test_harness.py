from __future__ import annotations

import pytest
import yaml

from brancher.harness.cli import main
from brancher.harness.config import (DEFAULT_REPLICAS, EXPERIMENTS, PARAMS,
                                     ConfigInvalid, from_dict, load)
from brancher.harness.run import (COLUMNS, ResourceBudgetExceeded, checks, run,
                                  to_csv)
from matrix import MATRIX, config

GOLDEN_HEADERS = {
    "survival": "law,n,replicas,p_hat,se,n_p_hat,target",
    "green": "r,g,g_err,g_scaled,a_prime,G,G_err,G_scaled,a",
    "bcap": "set,size,bcap,se,systematic,raw,radius,ratio_lower,ratio_upper,c_lower,c_upper",
    "pair_deficit": "r,deficit,se,systematic,asymptotic,ratio",
    "vacancy": "u,measured,se,systematic,raw,raw_se,predicted,predicted_se,"
               "predicted_systematic,bcap_K,bcap_window",
    "covariance": "r,u,cov,se,predicted,predicted_se,predicted_systematic,bcap_pair,bcap_single",
    "decorrelation": "r,distance,u,cov,se,abs_cov,bound,ratio",
    "cover": "replica,U0,statistic,M,arrivals",
    "gumbel": "replica,statistic",
    "crossing": "u,n,L0,d,mode,replicas,p_hat,se",
    "embeddings": "item,d,n,count,passed",
}


def test_matrix_covers_every_experiment():
    assert set(MATRIX) == set(EXPERIMENTS) == set(PARAMS) == set(DEFAULT_REPLICAS)


@pytest.mark.parametrize("exp", EXPERIMENTS)
def test_golden_csv_header(exp):
    assert to_csv(exp, []) == GOLDEN_HEADERS[exp] + "\n"
    assert ",".join(COLUMNS[exp]) == GOLDEN_HEADERS[exp]


def test_unknown_experiment():
    with pytest.raises(ConfigInvalid):
        from_dict({"experiment": "nope"})


@pytest.mark.parametrize("bad", [
    {"experiment": "survival", "replicas": 0},
    {"experiment": "survival", "seed": -1},
    {"experiment": "survival", "bogus": 1},
    {"experiment": "survival", "params": {"n": "ten"}},
    {"experiment": "survival", "params": {"laws": [{"0": 0.9, "2": 0.1}]}},
    {"experiment": "bcap", "law": "nope"},
    {"experiment": "bcap", "d": 3},
    {"experiment": "vacancy", "params": {"K": {"kind": "blob"}}},
    {"experiment": "decorrelation", "params": {"events": ["nonempty"]}},
    {"experiment": "survival", "budget_seconds": 0},
    [1, 2],
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigInvalid):
        from_dict(bad)


def test_defaults_filled():
    c = from_dict({"experiment": "bcap"})
    assert c.d == 5 and c.law == "binary" and c.replicas == DEFAULT_REPLICAS["bcap"]
    assert c.params == PARAMS["bcap"][1]
    assert from_dict({"experiment": "embeddings"}).d == 2
    c = from_dict({"experiment": "survival", "params": {"n": 7}})
    assert c.params["n"] == 7 and c.params["laws"] == ["binary", "geometric_half"]


def test_load_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(config("survival")))
    assert load(p).replicas == 2000
    with pytest.raises(ConfigInvalid):
        load(p, "bcap")
    with pytest.raises(ConfigInvalid):
        load(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("a: [1,\n")
    with pytest.raises(ConfigInvalid):
        load(tmp_path / "bad.yaml")


def _outputs(res):
    return res.csv_path.read_bytes(), res.summary_path.read_bytes()


@pytest.mark.parametrize("exp", EXPERIMENTS)
def test_rerun_byte_identical(exp, tmp_path):
    cfg = from_dict(config(exp))
    a = _outputs(run(cfg, tmp_path / "a", workers=1))
    b = _outputs(run(cfg, tmp_path / "b", workers=1))
    assert a == b
    header = a[0].decode().splitlines()[0]
    assert header == GOLDEN_HEADERS[exp]
    s = yaml.safe_load(a[1])
    assert s["experiment"] == exp and s["truncated"] is False
    assert "calibration_version" in s


@pytest.mark.parametrize("exp", ["survival", "bcap", "pair_deficit", "decorrelation"])
def test_worker_count_invariance(exp, tmp_path):
    cfg = from_dict(config(exp))
    a = _outputs(run(cfg, tmp_path / "w1", workers=1))
    b = _outputs(run(cfg, tmp_path / "w3", workers=3))
    assert a == b


def test_seed_changes_output(tmp_path):
    a = _outputs(run(from_dict(config("survival", 1)), tmp_path / "a"))
    b = _outputs(run(from_dict(config("survival", 2)), tmp_path / "b"))
    assert a[0] != b[0]


@pytest.mark.parametrize("workers", [1, 2])
def test_budget_exceeded_flushes_partial(workers, tmp_path):
    d = config("survival")
    d["budget_seconds"] = 1e-9
    d["replicas"] = 200_000
    with pytest.raises(ResourceBudgetExceeded) as e:
        run(from_dict(d), tmp_path, workers=workers)
    s = yaml.safe_load(e.value.result.summary_path.read_text())
    assert s["truncated"] is True


def test_checks_detect_failure():
    cfg = from_dict({"experiment": "green", "params": {"radii": [1]}})
    rows = [{"r": 1, "g_scaled": 2.0, "a_prime": 1.0, "G_scaled": 1.0, "a": 1.0}]
    cs = checks(cfg, rows)
    assert [c.passed for c in cs] == [False, True]


def _write(tmp_path, data):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(data))
    return str(p)


def test_cli_ok(tmp_path, capsys):
    p = _write(tmp_path, config("embeddings"))
    assert main(["embeddings", "--config", p, "--check", "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "PASS witness" in out
    assert (tmp_path / "o" / "embeddings.csv").exists()
    assert (tmp_path / "o" / "embeddings_summary.yaml").exists()


def test_cli_check_failure(tmp_path):
    p = _write(tmp_path, {"experiment": "green", "params": {"radii": [1]}})
    args = ["green", "--config", p, "--out", str(tmp_path / "o")]
    assert main(args) == 0
    assert main(args + ["--check"]) == 1


def test_cli_invalid(tmp_path):
    p = _write(tmp_path, {"experiment": "survival", "replicas": -3})
    assert main(["survival", "--config", p]) == 2
    p = _write(tmp_path, config("survival"))
    assert main(["survival", "--config", p, "--workers", "0"]) == 2
    assert main(["survival", "--config", p, "--seed", "-1"]) == 2
    with pytest.raises(SystemExit):
        main(["nope", "--config", p])


def test_cli_budget(tmp_path):
    d = config("survival")
    d["budget_seconds"] = 1e-9
    p = _write(tmp_path, d)
    assert main(["survival", "--config", p, "--out", str(tmp_path / "o")]) == 3


def test_cli_seed_override(tmp_path):
    p = _write(tmp_path, config("survival", 1))
    main(["survival", "--config", p, "--seed", "2", "--out", str(tmp_path / "a")])
    s = yaml.safe_load((tmp_path / "a" / "survival_summary.yaml").read_text())
    assert s["config"]["seed"] == 2
