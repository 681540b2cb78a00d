import json
import os
import subprocess
import sys

import pytest

from afqm.cli import main, parse_n_grid
from afqm.policy import InverseScalingPolicy, StateKind, load, save
from afqm.trialsim import estimate_cost


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("train")
    out = d / "p.json"
    assert main(["train", "--state", "sine", "--n", "8", "--algo", "pso", "--seed", "1", "--out", str(out)]) == 0
    return out


def test_train_outputs(trained):
    policy = load(trained)
    assert policy.n_trained == 8 and policy.seed == 1
    trace = (trained.parent / "p.json.trace.csv").read_text().splitlines()
    assert trace[0] == "iteration,best_cost" and len(trace) == 301
    manifest = json.loads((trained.parent / "p.json.manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["training"]["heldout_trials"] == 4 * 640


def test_train_beats_zero_baseline(trained):
    policy = load(trained)
    zero = estimate_cost(InverseScalingPolicy.zero(), 8, trials=2560, seed_base=1)
    assert policy.cost < zero.holevo_variance


def test_eval_reproduces_heldout_cost(trained, tmp_path):
    out = tmp_path / "e.csv"
    assert main(["eval", "--policy", str(trained), "--seed", "1", "--trials", "2560", "--out", str(out)]) == 0
    row = out.read_text().splitlines()[1].split(",")
    assert float(row[7]) == load(trained).cost


def test_eval_with_loss(trained, tmp_path):
    out = tmp_path / "e.csv"
    assert main(["eval", "--policy", str(trained), "--n", "16", "--loss-eta", "0.2", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[1].split(",")[3] == "0.2"


def test_eval_missing_policy(tmp_path, capsys):
    assert main(["eval", "--policy", str(tmp_path / "nope.json")]) == 3
    assert "no such policy file" in capsys.readouterr().err


def test_eval_malformed_policy(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"state_kind": "sine"}')
    assert main(["eval", "--policy", str(bad), "--n", "4"]) == 3


def test_train_css_valid(tmp_path):
    out = tmp_path / "c.json"
    assert main(["train", "--state", "css", "--ns", "4", "--n", "4", "--iters", "3", "--out", str(out)]) == 0
    assert load(out).state_kind is StateKind.CSS


@pytest.mark.parametrize("argv", [
    ["train", "--state", "sss", "--n", "1"],
    ["train", "--state", "sine", "--n", "4", "--agents", "3"],
    ["train", "--state", "ghz", "--n", "4"],
    ["train", "--n", "4"],
    ["eval", "--policy", "x.json", "--loss-eta", "2"],
    ["sweep", "--n-grid", "8,16"],
    ["sweep", "--n-grid", "16,8", "--retrain", "sine"],
    ["oracle-check", "--n", "13"],
    ["--threads", "0", "oracle-check"],
    [],
])
def test_usage_errors(argv):
    assert main(argv) == 2


def test_n_grid_forms():
    assert parse_n_grid("8,16,32") == [8, 16, 32]
    assert parse_n_grid("8:32:8") == [8, 16, 24, 32]
    assert parse_n_grid("8:256:log8") == [8, 13, 22, 35, 58, 95, 156, 256]


def test_sweep_and_fit(trained, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--policy", str(trained), "--n-grid", "8:64:log4", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "n,state,policy_id,eta,phase_sigma,K,S,V,dphi,dphi_stderr,seed"
    assert [r.split(",")[0] for r in rows[1:]] == ["8", "16", "32", "64"]
    assert (tmp_path / "s.reference.csv").exists()
    fit_out = tmp_path / "fit.json"
    assert main(["fit", str(out), "--out", str(fit_out)]) == 0
    fit = json.loads(fit_out.read_text())
    assert fit["points"] == 4 and fit["alpha"] > 0


def test_fit_rejects_short_table(tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("n,state,policy_id,eta,phase_sigma,K,S,V,dphi,dphi_stderr,seed\n"
                    "8,sine,x,0.0,0.0,640,0.9,0.2,0.4,0.01,0\n16,sine,x,0.0,0.0,2560,0.95,0.1,0.3,0.01,0\n")
    assert main(["fit", str(path)]) == 3


def test_fit_sentinel_row(tmp_path):
    path = tmp_path / "inf.csv"
    path.write_text("n,state,policy_id,eta,phase_sigma,K,S,V,dphi,dphi_stderr,seed\n"
                    "8,sine,x,0.0,0.0,640,0.0,inf,inf,inf,0\n16,sine,x,0.0,0.0,2560,0.95,0.1,0.3,0.01,0\n"
                    "32,sine,x,0.0,0.0,2560,0.95,0.1,0.2,0.01,0\n")
    assert main(["fit", str(path)]) == 4


def test_oracle_check_default(tmp_path):
    out = tmp_path / "o.txt"
    assert main(["oracle-check", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("case,n,state")
    assert len(lines) == 102
    assert lines[-1].startswith("# PASS")
    assert all(line.split(",")[7] for line in lines[1:-1])


def _run(args, threads, cwd):
    env = dict(os.environ, NUMBA_NUM_THREADS=str(threads))
    subprocess.run([sys.executable, "-m", "afqm.cli", "--threads", str(threads), *args],
                   cwd=cwd, env=env, check=True, capture_output=True)


def test_outputs_byte_identical_across_threads(tmp_path):
    policy = tmp_path / "p.json"
    save(InverseScalingPolicy(1.0, (1.6, -0.3, 0.4, 0.0), n_trained=12), policy)
    outputs = {}
    for threads in (1, 4, os.cpu_count() or 1):
        d = tmp_path / f"t{threads}"
        d.mkdir(exist_ok=True)
        _run(["eval", "--policy", str(policy), "--loss-eta", "0.1", "--phase-sigma", "0.2", "--out", "e.csv"], threads, d)
        _run(["train", "--state", "sss", "--n", "6", "--iters", "4", "--seed", "3", "--out", "p.json"], threads, d)
        outputs[threads] = [(d / f).read_bytes() for f in ("e.csv", "p.json", "p.json.trace.csv")]
    first = outputs[1]
    assert all(v == first for v in outputs.values())
