"""Command-line surface: subcommands, exit codes, artifact determinism."""

import asyncio
import importlib.resources as ir
import json
import socket
import subprocess
import sys
import time

import pytest
import websockets

from manipsim.cli import main
from manipsim.config import parse_config
from manipsim.harness import EvalReport

_CONFIGS = ir.files("manipsim") / "data/configs"
_REACH = str(_CONFIGS / "reach.json")
_DATASET = str(_CONFIGS / "dataset.json")


def _write_config(tmp_path, name="cfg.json", **edits):
    cfg = json.loads((_CONFIGS / "reach.json").read_text())
    cfg.update(edits)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


# ------------------------------------------------------------------- list


def test_list_prints_catalogs(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for needle in ("robots:", "kuka_iiwa", "grippers:", "magnetic",
                   "workspaces:", "objects:", "cube_0.05", "encoders:",
                   "metrics:", "euclidean"):
        assert needle in out


def test_list_json_is_machine_readable(capsys):
    assert main(["list", "--json"]) == 0
    sections = json.loads(capsys.readouterr().out)
    assert "kuka_iiwa" in sections["robots"]
    assert "magnetic" in sections["grippers"]
    assert set(sections) == {"robots", "grippers", "workspaces", "objects",
                             "encoders", "metrics"}


# --------------------------------------------------------------- validate


def test_validate_ok(capsys):
    assert main(["validate", "--config", _REACH]) == 0
    out = capsys.readouterr().out
    assert out.startswith("ok:")
    assert "digest=" in out and "robot=kuka_iiwa" in out


def test_validate_broken_config_exits_2_and_names_the_file(tmp_path, capsys):
    cfg = json.loads((_CONFIGS / "reach.json").read_text())
    cfg["task"]["type"] = "juggle"
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(cfg))
    assert main(["validate", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert str(path) in err and "juggle" in err


def test_json_flag_emits_structured_error(tmp_path, capsys):
    assert main(["validate", "--config", str(tmp_path / "absent.json"),
                 "--json"]) == 2
    payload = json.loads(capsys.readouterr().err)
    assert payload["error"]["exit_code"] == 2
    assert payload["error"]["type"] == "ConfigurationError"


def test_seed_override_changes_the_reported_digest(capsys):
    main(["validate", "--config", _REACH])
    base = capsys.readouterr().out
    main(["validate", "--config", _REACH, "--seed", "9"])
    overridden = capsys.readouterr().out
    digest = lambda text: next(l for l in text.splitlines()
                               if l.startswith("digest="))
    assert digest(base) != digest(overridden)
    assert "seed=9" in overridden


# ------------------------------------------------------------------- eval


def test_eval_writes_report_and_prints_success_rate(tmp_path, capsys):
    out = tmp_path / "report"
    args = ["eval", "--config", _REACH, "--agent", "random", "--episodes", "3",
            "--seed", "1", "--max-steps", "6", "--out", str(out)]
    assert main(args) == 0
    stdout = capsys.readouterr().out
    assert "success_rate=" in stdout
    report = EvalReport.from_csv((out / "eval.csv").read_text())
    assert report.n == 3 and report.agent == "random"
    blob = json.loads((out / "eval.json").read_text())
    cfg = json.loads((_CONFIGS / "reach.json").read_text())
    cfg.update(seed=1, max_steps=6)
    assert blob["config_digest"] == parse_config(cfg).digest()

    # identical invocation, identical artifact (bitwise)
    first = (out / "eval.csv").read_bytes()
    main(args)
    capsys.readouterr()
    assert (out / "eval.csv").read_bytes() == first


def test_eval_worker_count_does_not_change_the_report(tmp_path, capsys):
    outs = []
    for workers in ("1", "2"):
        out = tmp_path / f"w{workers}"
        assert main(["eval", "--config", _REACH, "--agent", "random",
                     "--episodes", "4", "--max-steps", "5",
                     "--workers", workers, "--out", str(out)]) == 0
        outs.append((out / "eval.csv").read_bytes())
    capsys.readouterr()
    assert outs[0] == outs[1]


def test_eval_rejects_unreadable_policy_file(tmp_path, capsys):
    assert main(["eval", "--config", _REACH, "--agent",
                 str(tmp_path / "ghost.json"), "--episodes", "1"]) == 2
    assert "policy file" in capsys.readouterr().err


# ------------------------------------------------------------------ train


def test_train_writes_policy_curve_and_report(tmp_path, capsys):
    out = tmp_path / "run"
    args = ["train", "--config", _REACH, "--seed", "1", "--max-steps", "5",
            "--out", str(out), "--iterations", "1", "--population", "4",
            "--episodes-per-candidate", "1", "--quiet"]
    assert main(args) == 0
    stdout = capsys.readouterr().out
    assert "policy=" in stdout and "best_reward=" in stdout

    blob = json.loads((out / "policy.json").read_text())
    assert blob["kind"] == "linear"
    assert blob["obs_digest"]
    assert blob["meta"]["config_digest"]

    curve = (out / "curve.csv").read_text().splitlines()
    assert curve[0] == "iteration,mean_elite_reward,best_reward"
    assert len(curve) == 2

    train_blob = json.loads((out / "train.json").read_text())
    assert train_blob["config_digest"] == blob["meta"]["config_digest"]
    assert train_blob["iterations"] == 1

    # rerunning the identical invocation reproduces the policy bitwise
    first = (out / "policy.json").read_bytes()
    main(args)
    capsys.readouterr()
    assert (out / "policy.json").read_bytes() == first


def test_trained_policy_feeds_back_into_eval(tmp_path, capsys):
    out = tmp_path / "run"
    main(["train", "--config", _REACH, "--seed", "1", "--max-steps", "5",
          "--out", str(out), "--iterations", "1", "--population", "4",
          "--episodes-per-candidate", "1", "--quiet"])
    capsys.readouterr()
    assert main(["eval", "--config", _REACH, "--seed", "1", "--max-steps", "5",
                 "--agent", str(out / "policy.json"), "--episodes", "2"]) == 0
    stdout = capsys.readouterr().out
    assert "agent=cem_file:policy.json" in stdout
    assert "success_rate=" in stdout


def test_eval_refuses_policy_with_foreign_observation_layout(tmp_path, capsys):
    out = tmp_path / "run"
    main(["train", "--config", _REACH, "--seed", "1", "--max-steps", "5",
          "--out", str(out), "--iterations", "0", "--population", "4",
          "--episodes-per-candidate", "1", "--quiet"])
    capsys.readouterr()
    blob = json.loads((out / "policy.json").read_text())
    blob["obs_digest"] = "0" * 16
    (out / "policy.json").write_text(json.dumps(blob))
    assert main(["eval", "--config", _REACH, "--agent",
                 str(out / "policy.json"), "--episodes", "1"]) == 2
    assert "layout" in capsys.readouterr().err


# ---------------------------------------------------------------- dataset


def test_dataset_generates_and_checks(tmp_path, capsys):
    out = tmp_path / "ds"
    assert main(["dataset", "--config", _DATASET, "--images", "2",
                 "--out", str(out), "--check"]) == 0
    stdout = capsys.readouterr().out
    assert "manifest=" in stdout and "validation=ok" in stdout
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["n_images"] == 2


def test_dataset_check_fails_on_corrupt_annotations(tmp_path, capsys):
    out = tmp_path / "ds"
    main(["dataset", "--config", _DATASET, "--images", "2", "--out", str(out)])
    capsys.readouterr()
    ann = next((out / "annotations").glob("*.json"))
    blob = json.loads(ann.read_text())
    blob["annotations"][0]["pixel_count"] += 7
    ann.write_text(json.dumps(blob))
    assert main(["dataset", "--config", _DATASET, "--images", "2",
                 "--out", str(out), "--check"]) == 3
    assert "problem:" in capsys.readouterr().err


# ------------------------------------------------------------------ serve


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_serve_subcommand_speaks_the_protocol(tmp_path):
    port = _free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "manipsim.cli", "serve",
         "--config", _REACH, "--bind", f"127.0.0.1:{port}",
         "--max-sessions", "2", "--timeout", "30"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    try:
        async def exercise():
            for attempt in range(50):
                try:
                    ws = await websockets.connect(f"ws://127.0.0.1:{port}")
                    break
                except OSError:
                    await asyncio.sleep(0.1)
            else:
                raise RuntimeError("server did not come up")
            async with ws:
                await ws.send(json.dumps({"proto": 1, "request_id": "a",
                                          "type": "create_session"}))
                reply = json.loads(await ws.recv())
                assert reply["type"] == "reply"
                state = json.loads(await ws.recv())
                assert state["type"] == "state" and state["tick"] == 0
                await ws.send(json.dumps({"proto": 1, "request_id": "b",
                                          "type": "close",
                                          "session_id": reply["session_id"]}))
                closed = json.loads(await ws.recv())
                assert closed["type"] == "reply" and closed["closed"] is True

        asyncio.run(asyncio.wait_for(exercise(), timeout=30))
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def test_serve_rejects_broken_default_config(tmp_path, capsys):
    cfg = json.loads((_CONFIGS / "reach.json").read_text())
    cfg["workspace"] = "narnia"
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(cfg))
    assert main(["serve", "--config", str(path),
                 "--bind", "127.0.0.1:1"]) == 2
    assert "narnia" in capsys.readouterr().err


# ------------------------------------------------------------- arg errors


def test_missing_subcommand_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    capsys.readouterr()


def test_config_flag_is_required_except_for_list(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["validate"])
    assert exc.value.code == 2
    capsys.readouterr()
