import csv
import json
import os

import jsonschema
import pytest

from lpclt.bundle import SUMMARY_SCHEMA, read_path_csv
from lpclt.cli import parse_and_dispatch

VERIFY = """[experiment]
name = cvm_iid
seed = 0

[process]
spec = IID(dist=Uniform01())

[measure]
spec = LebesgueInterval(a=0.0, b=1.0)
grid_size = 128

[clt]
n_schedule = [64, 256]
replicates = 300
max_lag = 0
cov_budget = 20000
"""

PARETO = """[experiment]
name = pareto_poly

[check]
condition = series
dist = ParetoTail(c=1.0, r=4.0)
profile = Polynomial(C=1.0, s=3.0)
N_max = 4096
"""

CHAIN = """[experiment]
name = chain

[process]
spec = FiniteStateMarkov(states=[0.0, 1.0], matrix=[[0.9, 0.1], [0.2, 0.8]])

[measure]
grid_size = 32

[simulate]
n = 50
replicates = 2

[mixing]
method = exact
k_max = 20

[diagnose]
n_schedule = [256, 1024]
mc_paths = 50
audit_n_max = 20
"""

PROBE = """[experiment]
name = probe

[probe]
gamma = 0.25
alpha = 0.3
n_schedule = [128, 256]
replicates = 200
grid_size = 64
"""


@pytest.fixture
def cfgs(tmp_path):
    out = {}
    for name, text in (("cvm_iid", VERIFY), ("pareto_poly", PARETO), ("chain", CHAIN),
                       ("probe", PROBE)):
        path = tmp_path / f"{name}.cfg"
        path.write_text(text)
        out[name] = str(path)
    return out


def run(*argv):
    return parse_and_dispatch([str(a) for a in argv])


def _summary(d):
    with open(os.path.join(d, "summary.json")) as fh:
        s = json.load(fh)
    jsonschema.validate(s, SUMMARY_SCHEMA)
    return s


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_verify_writes_bundle(cfgs, tmp_path, capsys):
    out = tmp_path / "runs"
    assert run("verify", "--config", cfgs["cvm_iid"], "--seed", 42, "--out", out) == 0
    d = out / "cvm_iid-verify"
    assert capsys.readouterr().out.strip() == str(d)
    with open(d / "distances.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["n", "ks", "w1"] and [r[0] for r in rows[1:]] == ["64", "256"]
    with open(d / "statistics_n64.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["n", "replicate", "statistic"] and len(rows) == 301
    s = _summary(d)
    assert s["seed"] == 42 and not s["partial"] and "distances.csv" in s["files"]
    assert json.loads(_read(d / "config.json"))["seed"] == 42


def test_bundles_are_byte_identical(cfgs, tmp_path):
    for root in ("a", "b"):
        assert run("verify", "--config", cfgs["cvm_iid"], "--seed", 7,
                   "--out", tmp_path / root, "--jobs", 1 if root == "a" else 3) == 0
    da, db = tmp_path / "a" / "cvm_iid-verify", tmp_path / "b" / "cvm_iid-verify"
    assert sorted(os.listdir(da)) == sorted(os.listdir(db))
    for f in os.listdir(da):
        assert _read(da / f) == _read(db / f), f


def test_seed_changes_output_and_hash(cfgs, tmp_path):
    run("verify", "--config", cfgs["cvm_iid"], "--seed", 1, "--out", tmp_path)
    run("verify", "--config", cfgs["cvm_iid"], "--seed", 2, "--out", tmp_path)
    a, b = tmp_path / "cvm_iid-verify", tmp_path / "cvm_iid-verify-2"
    assert _summary(a)["config_hash"] != _summary(b)["config_hash"]
    assert _read(a / "limit.csv") != _read(b / "limit.csv")


def test_no_overwrite_unless_forced(cfgs, tmp_path):
    root = tmp_path / "runs"
    for _ in range(2):
        run("check", "--config", cfgs["pareto_poly"], "--out", root)
    assert sorted(os.listdir(root)) == ["pareto_poly-check", "pareto_poly-check-2"]
    run("check", "--config", cfgs["pareto_poly"], "--out", root, "--force")
    assert len(os.listdir(root)) == 2


def test_output_root_from_environment(cfgs, tmp_path, monkeypatch):
    monkeypatch.setenv("LPCLT_OUT", str(tmp_path / "env"))
    assert run("check", "--config", cfgs["pareto_poly"]) == 0
    assert os.path.isdir(tmp_path / "env" / "pareto_poly-check")


def test_check_emits_converges(cfgs, tmp_path, capsys):
    assert run("check", "--config", cfgs["pareto_poly"], "--out", tmp_path) == 0
    out = capsys.readouterr().out
    report = json.loads(out[: out.rindex("}") + 1])
    assert report["verdict"] == "converges"
    strict = run("check", "--config", cfgs["pareto_poly"], "--out", tmp_path, "--strict")
    assert strict == 0
    out = capsys.readouterr().out
    assert json.loads(out[: out.rindex("}") + 1])["verdict"] == "inconclusive"


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.cfg"
    assert run("verify", "--config", missing) == 1
    assert str(missing) in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["bogus"], ["verify", "--bad"], [], ["check", "--format", "xml"]])
def test_usage_errors(argv, capsys):
    assert run(*argv) == 1
    assert "usage:" in capsys.readouterr().err


def test_config_error_has_line_and_field(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[experiment]\nname = x\n\n[clt]\nreplicates = many\n")
    assert run("verify", "--config", bad, "--out", tmp_path) == 1
    assert f"{bad}:5 [clt.replicates]" in capsys.readouterr().err


def test_runtime_error_leaves_partial_bundle(cfgs, tmp_path, capsys):
    text = VERIFY.replace("cov_budget = 20000", "cov_budget = 10")
    cfg = tmp_path / "fail.cfg"
    cfg.write_text(text)
    assert run("verify", "--config", cfg, "--out", tmp_path / "r") == 2
    err = capsys.readouterr().err
    d = tmp_path / "r" / "cvm_iid-verify"
    assert "partial output in" in err and str(d) in err
    s = _summary(d)
    assert s["partial"] and os.path.exists(d / "statistics_n256.csv")


def test_unwritable_directory_is_runtime_error(cfgs, tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("check", "--config", cfgs["pareto_poly"], "--out", blocker / "sub") == 2
    assert "cannot create bundle directory" in capsys.readouterr().err


def test_json_format(cfgs, tmp_path):
    assert run("verify", "--config", cfgs["cvm_iid"], "--out", tmp_path, "--format", "json") == 0
    d = tmp_path / "cvm_iid-verify"
    dist = json.loads(_read(d / "distances.json"))
    assert dist["columns"] == ["n", "ks", "w1"] and len(dist["rows"]) == 2


def test_simulate_mixing_diagnose(cfgs, tmp_path):
    assert run("simulate", "--config", cfgs["chain"], "--seed", 3, "--out", tmp_path) == 0
    vals, meta = read_path_csv(tmp_path / "chain-simulate" / "path_1.csv")
    assert vals.size == 50 and set(vals) <= {0.0, 1.0} and meta["seed"] == "3"
    assert run("mixing", "--config", cfgs["chain"], "--seed", 3, "--out", tmp_path) == 0
    with open(tmp_path / "chain-mixing" / "profile.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "value"]
    assert float(rows[4][1]) == pytest.approx(4 / 9 * 0.7 ** 3, abs=1e-12)
    assert run("diagnose", "--config", cfgs["chain"], "--seed", 3, "--out", tmp_path) == 0
    s = _summary(tmp_path / "chain-diagnose")
    assert s["seed"] == 3 and s["results"]["audit_holds"]
    for name in ("simulate", "mixing", "diagnose"):
        assert _summary(tmp_path / f"chain-{name}")["seed"] == 3


def test_probe_and_report(cfgs, tmp_path, capsys):
    assert run("probe", "--config", cfgs["probe"], "--seed", 4, "--out", tmp_path) == 0
    d = tmp_path / "probe-probe"
    assert json.loads(_read(d / "probe.json"))["inputs"]["seed"] == 4
    capsys.readouterr()
    assert run("report", d) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "key,value" and "seed,4" in out
    assert run("report", d, "--format", "json") == 0
    assert json.loads(capsys.readouterr().out)["command"] == "probe"
    assert run("report", tmp_path / "missing") == 1
