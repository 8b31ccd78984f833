import json

import numpy as np
import pytest

from ordergrid.cli import main
from ordergrid.qnet import load_checkpoint

FAST = ["--subset", "comma", "--proportion", "0.1", "--epochs", "2", "--seed", "1",
        "--set", "env.max_steps_per_subgoal=4", "--set", "agent.batch_size=4",
        "--set", "replay.capacity=256", "--set", "train.checkpoint_every=1"]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--out", str(out), "--quiet", "--replay", "prioritized"] + FAST) == 0
    return out


def test_gen_lang_counts(capsys):
    assert main(["gen-lang", "--subset", "comma", "--min", "1", "--max", "3"]) == 0
    out, err = capsys.readouterr()
    lines = out.splitlines()
    assert len(lines) == 21 and "21 instructions" in err
    assert json.loads(lines[0])["text"] == "Go to the red"


def test_usage_errors(capsys):
    assert main(["gen-lang", "--subset", "comma", "--bogus"]) == 1
    assert main(["no-such-command"]) == 1
    assert main(["gen-lang", "--subset", "comma", "--min", "0"]) == 1
    assert main(["render", "Go to the purple"]) == 1
    assert main(["train", "--out", "x", "--set", "nope=1"]) == 1
    err = capsys.readouterr().err
    assert all(line.startswith(("error", "usage")) for line in err.splitlines() if line)


def test_gradcheck_exit_codes(capsys):
    assert main(["gradcheck", "--small-only"]) == 0
    assert main(["gradcheck", "--small-only", "--tol", "1e-30"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_run_directory_contents(run_dir):
    names = {p.name for p in run_dir.iterdir()}
    assert {"config.txt", "layout.json", "language_train.jsonl", "language_test.jsonl",
            "train_log.jsonl", "timing.jsonl", "checkpoints", "results.jsonl",
            "replay_priorities.npz"} <= names
    ckpts = sorted(p.name for p in (run_dir / "checkpoints").iterdir())
    assert "epoch_00001.ckpt" in ckpts and "epoch_00002.ckpt" in ckpts and "final.ckpt" in ckpts
    log = [json.loads(l) for l in (run_dir / "train_log.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in log] == [1, 2]
    assert "wall_time" not in log[0]
    assert "replay.mode = \"prioritized\"" in (run_dir / "config.txt").read_text()


def test_runs_are_bit_identical(run_dir, tmp_path):
    other = tmp_path / "again"
    assert main(["train", "--out", str(other), "--quiet", "--replay", "prioritized"] + FAST) == 0
    for name in ("config.txt", "train_log.jsonl", "language_train.jsonl", "results.jsonl",
                 "checkpoints/final.ckpt", "checkpoints/epoch_00001.ckpt"):
        assert (run_dir / name).read_bytes() == (other / name).read_bytes(), name


def test_eval_run_and_oracle(run_dir, capsys):
    assert main(["eval", "--run", str(run_dir)]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["n_train"] == 2 and rec["n_test"] == 168
    assert main(["eval", "--policy", "oracle", "--subset", "comma-butbefore"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec == {"policy": "oracle", "n": 375, "success": 1.0}
    assert main(["eval"]) == 1


def test_eval_specific_checkpoint(run_dir, capsys):
    ckpt = run_dir / "checkpoints" / "epoch_00001.ckpt"
    assert main(["eval", "--run", str(run_dir), "--checkpoint", str(ckpt)]) == 0
    capsys.readouterr()
    data = bytearray(ckpt.read_bytes())
    data[-1] ^= 1
    ckpt.write_bytes(bytes(data))
    assert main(["eval", "--run", str(run_dir), "--checkpoint", str(ckpt)]) == 1


def test_render(run_dir, tmp_path, capsys):
    assert main(["render", "Go to the red, but first go to the green"]) == 0
    out = capsys.readouterr().out
    assert "->  green, red" in out and out.count("\n") == 11
    trace = tmp_path / "t.jsonl"
    assert main(["render", "Go to the blue", "--policy", "oracle", "--trace", str(trace)]) == 0
    assert "success after 7 steps" in capsys.readouterr().out
    assert len(trace.read_text().splitlines()) == 7
    assert main(["render", "Go to the blue", "--policy", "greedy", "--run", str(run_dir),
                 "--frames"]) == 0
    assert main(["render", "Go to the blue", "--policy", "greedy"]) == 1


def test_inspect_replay(run_dir, capsys):
    path = run_dir / "replay_priorities.npz"
    assert main(["inspect-replay", str(path)]) == 0
    assert "tree consistency: ok" in capsys.readouterr().out
    data = dict(np.load(path))
    data["tree"][1] *= 2
    bad = run_dir.parent / "bad.npz"
    np.savez(bad, **data)
    assert main(["inspect-replay", str(bad)]) == 1
    assert main(["inspect-replay", str(run_dir / "missing.npz")]) == 1


def test_sweep_and_report(tmp_path, capsys):
    out = tmp_path / "sweep"
    args = ["sweep", "--out", str(out), "--subset", "comma-butfirst", "--epochs", "1",
            "--set", "experiment.proportions=[0.1, 0.2]", "--set", "env.max_steps_per_subgoal=2",
            "--set", "agent.batch_size=4", "--set", "replay.capacity=128"]
    assert main(args) == 0
    files = list(out.glob("*.jsonl"))
    assert [f.name for f in files] == ["comma-butfirst_cat_uniform.jsonl"]
    capsys.readouterr()
    assert main(["report", str(files[0])]) == 0
    text = capsys.readouterr().out
    assert "Comma-ButFirst" in text and "DDQN + Cat" in text
    assert main(["report", str(tmp_path / "none.jsonl")]) == 1


def test_checkpoint_matches_config(run_dir):
    from ordergrid import config as config_mod
    cfg = config_mod.load_config(run_dir / "config.txt")
    agent = config_mod.build_agent_config(cfg)
    params = load_checkpoint(run_dir / "checkpoints" / "final.ckpt", agent.network)
    assert params["trunk.w"].shape == (128, 32 * 16 + 64)
