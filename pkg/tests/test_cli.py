import json

import pytest
import yaml

from rivernav import cli
from rivernav.config import data_file
from rivernav.pid import read_gains
from rivernav.river import read_grid
from rivernav.rl import load_checkpoint, read_curve
from rivernav.rl.agent import TrainingDiverged


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_generate_is_deterministic(tmp_path):
    cfg = data_file("generator.yaml")
    assert run("generate", "--config", cfg, "--seed", 5, "--out", tmp_path / "a") == 0
    assert run("generate", "--config", cfg, "--seed", 5, "--out", tmp_path / "b") == 0
    for name in ("grid.txt", "path.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["status"] == "ok" and man["seed"] == 5 and man["subcommand"] == "generate"
    assert list(man["inputs"].values())[0] == cli.sha256(cfg)
    read_grid(tmp_path / "a" / "grid.txt")


def test_generate_rejects_bad_config(tmp_path, capsys):
    (tmp_path / "c.yaml").write_text("river: {n: 0}\n")
    assert run("generate", "--config", tmp_path / "c.yaml", "--out", tmp_path / "o") == 2
    assert "n must be" in capsys.readouterr().err
    (tmp_path / "d.yaml").write_text("river: {colour: blue}\n")
    assert run("generate", "--config", tmp_path / "d.yaml", "--out", tmp_path / "o") == 2


def test_missing_config_is_io_error(tmp_path):
    assert run("generate", "--config", tmp_path / "none.yaml", "--out", tmp_path / "o") == 4


def test_output_path_blocked_is_io_error(tmp_path):
    (tmp_path / "file").write_text("")
    assert run("generate", "--out", tmp_path / "file" / "sub") == 4


def write_train_config(tmp_path, steps):
    doc = yaml.safe_load(data_file("train_smoke.yaml").read_text())
    doc["train"].update(total_steps=steps, checkpoint_every=100, learning_starts=50, batch=16, core=[16], head=[16])
    path = tmp_path / f"train_{steps}.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


def test_train_zero_steps(tmp_path):
    cfg = write_train_config(tmp_path, 0)
    assert run("train", "--config", cfg, "--seed", 0, "--out", tmp_path / "t") == 0
    assert read_curve(tmp_path / "t" / "curve.csv") == []
    man = json.loads((tmp_path / "t" / "manifest.json").read_text())
    assert man["cumulative_steps"] == 0


def test_train_and_resume(tmp_path):
    assert run("train", "--config", write_train_config(tmp_path, 200), "--out", tmp_path / "a") == 0
    agent, extra = load_checkpoint(tmp_path / "a" / "final.npz")
    assert agent.step == 200 and extra["curriculum"] == "straight" and extra["reward"]["ye_scale"] == 50.0
    assert (tmp_path / "a" / "checkpoints" / "step_100.npz").exists()
    assert run("train", "--config", write_train_config(tmp_path, 300), "--out", tmp_path / "b",
               "--resume", tmp_path / "a" / "checkpoints" / "step_100.npz") == 0
    resumed, _ = load_checkpoint(tmp_path / "b" / "final.npz")
    assert resumed.step == 300
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["cumulative_steps"] == 300


def test_train_is_deterministic(tmp_path):
    cfg = write_train_config(tmp_path, 150)
    run("train", "--config", cfg, "--seed", 3, "--out", tmp_path / "a")
    run("train", "--config", cfg, "--seed", 3, "--out", tmp_path / "b")
    for name in ("final.npz", "curve.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_train_divergence_exit_code(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise TrainingDiverged("non-finite loss")

    monkeypatch.setattr(cli, "train", boom)
    assert run("train", "--config", write_train_config(tmp_path, 10), "--out", tmp_path / "t") == 3
    assert json.loads((tmp_path / "t" / "manifest.json").read_text())["status"] == "diverged"


def test_resume_with_mismatched_network(tmp_path):
    run("train", "--config", write_train_config(tmp_path, 0), "--out", tmp_path / "a")
    doc = yaml.safe_load(write_train_config(tmp_path, 10).read_text())
    doc["train"]["core"] = [32]
    (tmp_path / "other.yaml").write_text(yaml.safe_dump(doc))
    assert run("train", "--config", tmp_path / "other.yaml", "--out", tmp_path / "b",
               "--resume", tmp_path / "a" / "final.npz") == 2


def test_tune_pid_self_test(capsys):
    assert run("tune-pid", "--self-test") == 0
    assert "passed" in capsys.readouterr().out


def test_tune_pid_small_run(tmp_path):
    doc = {"pso": {"particles": 3, "iterations": 1}, "scenario": {"horizon": 100}}
    (tmp_path / "p.yaml").write_text(yaml.safe_dump(doc))
    for out in ("a", "b"):
        assert run("tune-pid", "--config", tmp_path / "p.yaml", "--seed", 1, "--out", tmp_path / out) == 0
    assert (tmp_path / "a" / "gains.yaml").read_bytes() == (tmp_path / "b" / "gains.yaml").read_bytes()
    g = read_gains(tmp_path / "a" / "gains.yaml")
    assert 0 <= g.Kp <= 10 and 0 <= g.Kd <= 150


def test_tune_pid_box_error(tmp_path):
    (tmp_path / "p.yaml").write_text(yaml.safe_dump({"pso": {"lower": [0, 200, 0], "upper": [10, 150, 0.1]}}))
    assert run("tune-pid", "--config", tmp_path / "p.yaml", "--out", tmp_path / "o") == 2
    assert run("tune-pid", "--config", tmp_path / "p.yaml") == 2


def test_maneuver_turning(tmp_path):
    assert run("maneuver", "--test", "turning", "--depth-ratio", 1.2, "--out", tmp_path / "m") == 0
    summary = yaml.safe_load((tmp_path / "m" / "summary.yaml").read_text())
    assert summary["steady_diameter"] == pytest.approx(248.34, abs=0.1)
    assert (tmp_path / "m" / "turning.csv").exists()
    assert run("maneuver", "--test", "zigzag", "--depth-ratio", 0.9, "--out", tmp_path / "z") == 2


def test_evaluate_scenarios_in_parallel(tmp_path):
    for k, ctrl in enumerate(({"type": "fixed"}, {"type": "pid", "Kp": 2.81, "Kd": 64.0})):
        doc = {"name": f"s{k}", "river": {"gen": {"seed": 1, "n": 1}}, "controller": ctrl, "max_steps": 100}
        (tmp_path / f"s{k}.yaml").write_text(yaml.safe_dump(doc))
    scen = [tmp_path / "s0.yaml", tmp_path / "s1.yaml"]
    assert run("evaluate", *scen, "--jobs", 2, "--out", tmp_path / "p") == 0
    assert run("evaluate", *scen, "--out", tmp_path / "q") == 0
    for name in ("s0/trace.csv", "s1/trace.csv", "s1/summary.csv"):
        assert (tmp_path / "p" / name).read_bytes() == (tmp_path / "q" / name).read_bytes()


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        run("--help")
    out = capsys.readouterr().out
    for name in ("generate", "train", "tune-pid", "maneuver", "evaluate"):
        assert name in out
