import csv
import json
import math

import numpy as np
import pytest
import yaml

from gpclogz import bench
from gpclogz.cli import main

RHO_DIST = math.sqrt(2 * math.log(1.25))  # unit-lengthscale distance giving K_12 = 0.8


def write_cfg(tmp_path, cfg):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return p


def oracle_cfg(methods, reps=1):
    return {"kernel": {"lengthscale": 1.0, "amplitude": 1.0, "jitter": 0.0},
            "data": {"inputs": [[0.0], [RHO_DIST]], "labels": [1, 1]},
            "methods": methods, "repetitions": reps, "seed": 0}


def test_ep_only_single_record():
    cfg = bench.BenchConfig.from_mapping(oracle_cfg(["ep"]))
    recs = list(bench.iter_bench(cfg))
    assert len(recs) == 1
    assert recs[0].wall_time_s > 0 and recs[0].error is None
    assert abs(recs[0].log_z + 1.153612) < 0.01


@pytest.mark.parametrize("bad", [
    {"methods": ["nope"]},
    {"methods": {"rm": {"r_particles": 1}}},
    {"methods": {"ep": {"bogus": 1}}},
    {"kernel": {"lengthscale": -1.0}},
    {"repetitions": 0},
    {"data": {}},
    {"extra": 1},
])
def test_config_validation(bad):
    raw = oracle_cfg(["ep"])
    raw.update(bad)
    with pytest.raises(bench.ConfigError):
        bench.BenchConfig.from_mapping(raw)


def test_digest_stable_and_sensitive():
    a = bench.BenchConfig.from_mapping(oracle_cfg({"rm": {"r_particles": 100}}))
    b = bench.BenchConfig.from_mapping(oracle_cfg({"rm": {"r_particles": 100}}))
    c = bench.BenchConfig.from_mapping(oracle_cfg({"rm": {"r_particles": 101}}))
    da = a.method_digest(*a.methods[0])
    assert da == b.method_digest(*b.methods[0])
    assert da != c.method_digest(*c.methods[0])


def test_failure_recorded_and_continues(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("forced")
    monkeypatch.setattr(bench, "rm_estimate", boom)
    cfg = bench.BenchConfig.from_mapping(oracle_cfg(["rm", "ep"]))
    recs = list(bench.iter_bench(cfg))
    assert math.isnan(recs[0].log_z) and "forced" in recs[0].error
    assert recs[1].error is None


def test_cli_bench_outputs_and_determinism(tmp_path):
    methods = {"ep": {}, "rm": {"r_particles": 500}, "ais-hmc-prior": {"b_count": 10, "runs": 5},
               "ais-rmhmc-q": {"b_count": 10, "runs": 5, "epsilon": 0.5, "l_max": 3}}
    p = write_cfg(tmp_path, oracle_cfg(methods, reps=2))
    outs = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        assert main(["bench", str(p), "--out", str(out)]) == 0
        outs.append(out)
    rows = [list(csv.DictReader((o / "runs.csv").open())) for o in outs]
    assert list(rows[0][0]) == list(bench.CSV_COLUMNS)
    assert len(rows[0]) == 8
    for r0, r1 in zip(*rows):
        assert r0["log_z"] == r1["log_z"] and r0["config_digest"] == r1["config_digest"]
    lines = [json.loads(x) for x in (outs[0] / "runs.jsonl").read_text().splitlines()]
    assert all("config" in x for x in lines if not x.get("summary"))
    assert sum(1 for x in lines if x.get("summary")) == 4
    summ = list(csv.DictReader((outs[0] / "summary.csv").open()))
    assert [s["method"] for s in summ] == list(methods)


def test_cli_bench_exit_code_on_error(tmp_path, monkeypatch):
    monkeypatch.setattr(bench, "rm_estimate", lambda *a, **k: 1 / 0)
    p = write_cfg(tmp_path, oracle_cfg(["rm"]))
    assert main(["bench", str(p), "--out", str(tmp_path / "o"), "--format", "csv"]) == 1
    assert not (tmp_path / "o" / "runs.jsonl").exists()


def test_cli_bad_config(tmp_path, capsys):
    p = write_cfg(tmp_path, {"methods": ["ep"]})
    assert main(["bench", str(p)]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_check_oracle(capsys):
    assert main(["check-oracle", "--n", "1", "--quick"]) == 0
    out = capsys.readouterr().out
    assert "-0.693147181" in out and "rm" in out


def test_cli_ep_and_sample(tmp_path, capsys):
    data = tmp_path / "d.csv"
    rng = np.random.default_rng(0)
    rows = [f"{a:.4f},{b:.4f},{1 if a > 0 else -1}" for a, b in rng.standard_normal((12, 2))]
    data.write_text("\n".join(rows) + "\n")
    assert main(["ep", str(data), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "ep.json").read_text())["converged"]
    for m in ("gibbs", "hmc", "rmhmc"):
        assert main(["sample", str(data), "--method", m, "--iterations", "20", "--burn-in", "5",
                     "--out", str(tmp_path)]) == 0
        assert np.loadtxt(tmp_path / f"samples_{m}.csv", delimiter=",").shape == (20, 12)


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        main(["bench", "--help"])
    out = capsys.readouterr().out
    assert "r_particles 1000" in out and "beta_min 1e-4" in out
