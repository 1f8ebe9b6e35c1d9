"""Acceptance gate: one test per shipping criterion (AC-1 .. AC-11).

Run with `pytest -v tests/test_acceptance.py` — the verbose report gives
one PASSED/FAILED line per criterion. Each test also prints its measured
numbers, which pytest shows for failures (or with -rA/-s).
"""

import asyncio
import importlib.resources as ir
import json
import socket
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import websockets
from scipy.stats import spearmanr

from manipsim.agents import GreedyAgent, RandomAgent
from manipsim.catalog import build_robot, robot_names
from manipsim.dataset import generate_dataset, validate_dataset
from manipsim.env import make_env
from manipsim.geometry import DistanceMetric, MetricKind, Pose, Vec3, compute_distance
from manipsim.harness import cem_train, evaluate, run_episode
from manipsim.robot import fk_ee, fk_link_poses
from manipsim.seeding import stream

from ._oracles import fk_oracle, pose_to_hmat
from .test_robot import oracle_inputs

_CONFIGS = ir.files("manipsim") / "data/configs"


def _load(name, **edits):
    cfg = json.loads((_CONFIGS / name).read_text())
    cfg.update(edits)
    return cfg


def _report(label, ok, detail):
    print(f"{label}: {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, f"{label}: {detail}"


# ---------------------------------------------------------------- AC-1..4


def test_ac01_reach_solvable_by_greedy():
    env = make_env(_load("reach.json", seed=1))
    t0 = time.perf_counter()
    report = evaluate(env, GreedyAgent(), 200, workers=1)
    elapsed = time.perf_counter() - t0
    detail = (f"success_rate={report.success_rate:.3f} (need >= 0.95), "
              f"runtime={elapsed:.1f}s (need < 60)")
    _report("AC-1", report.success_rate >= 0.95 and elapsed < 60.0, detail)


def test_ac02_pick_and_place_solvable_with_ordered_grasp():
    env = make_env(_load("pick_place.json"))
    agent = GreedyAgent()
    successes = 0
    ordering_ok = True
    for ep in range(100):
        r = run_episode(env, agent, episode=ep)
        if not r.success:
            continue
        successes += 1
        held = [s.info["attached"] for s in r.trace]
        grabbed = [i for i, h in enumerate(held) if h is not None]
        # attach happened, and the run ends with the object released
        if not grabbed or held[-1] is not None:
            ordering_ok = False
        elif min(grabbed) == 0 or max(grabbed) == len(held) - 1:
            ordering_ok = False
    rate = successes / 100.0
    detail = (f"success_rate={rate:.3f} (need >= 0.80), "
              f"attach-then-release ordering={'ok' if ordering_ok else 'BROKEN'}")
    _report("AC-2", rate >= 0.80 and ordering_ok, detail)


def test_ac03_reward_separates_random_from_greedy():
    cfg = _load("reach.json", seed=1)
    greedy = evaluate(make_env(cfg), GreedyAgent(), 200, workers=1)
    random_ = evaluate(make_env(cfg), RandomAgent(), 200, workers=1)
    gap = greedy.success_rate - random_.success_rate
    detail = (f"greedy={greedy.success_rate:.3f} random={random_.success_rate:.3f} "
              f"gap={gap:.3f} (need >= 0.5)")
    _report("AC-3", random_.success_rate <= greedy.success_rate - 0.5, detail)


def test_ac04_cem_improves_and_reaches_half_success():
    cfg = _load("reach.json", seed=1, max_steps=96)
    cfg["reward"]["shaping"] = "dense_negative"
    env = make_env(cfg)
    t0 = time.perf_counter()
    policy, curve = cem_train(env, iterations=30, population=32,
                              elite_frac=0.2, rng=stream(1, 0, "cem"))
    report = evaluate(env, policy, 100, workers=1)
    elapsed = time.perf_counter() - t0
    improved = curve[-1].mean_elite_reward > curve[0].mean_elite_reward
    detail = (f"elite reward {curve[0].mean_elite_reward:.2f} -> "
              f"{curve[-1].mean_elite_reward:.2f} (must increase), "
              f"success_rate={report.success_rate:.3f} (need >= 0.5), "
              f"runtime={elapsed:.0f}s (need < 600)")
    _report("AC-4", improved and report.success_rate >= 0.5 and elapsed < 600,
            detail)


# ---------------------------------------------------------------- AC-5..6


def test_ac05_fk_matches_homogeneous_matrix_oracle():
    rng = np.random.default_rng(42)
    names = list(robot_names())
    worst = 0.0
    checks = 0
    for i in range(1000):
        # vary the base pose too, so the oracle exercises the full transform
        base = Pose.from_position(Vec3(*rng.uniform(-0.6, 0.6, size=3)))
        robot = build_robot(names[i % len(names)], "magnetic", base)
        base_h, origins, axes, kinds = oracle_inputs(robot)
        lo, hi = robot.joint_limits()
        q = rng.uniform(lo, hi)
        frames = fk_oracle(base_h, origins, axes, kinds, q)
        for link, frame in zip(fk_link_poses(robot, q), frames):
            worst = max(worst, float(np.abs(pose_to_hmat(link) - frame).max()))
        ee_h = pose_to_hmat(fk_ee(robot, q))
        want_ee = frames[-1] @ pose_to_hmat(robot.ee_offset)
        worst = max(worst, float(np.abs(ee_h - want_ee).max()))
        checks += 1
    detail = f"{checks} random configurations, max |error|={worst:.2e} (need <= 1e-9)"
    _report("AC-5", worst <= 1e-9, detail)


def test_ac06_metric_identities_hold():
    rng = np.random.default_rng(3)
    euclid = DistanceMetric(MetricKind.EUCLIDEAN)
    manhattan = DistanceMetric(MetricKind.MANHATTAN)
    ident = DistanceMetric(MetricKind.MAHALANOBIS, mahalanobis_diag=(1.0,) * 6)
    weighted = DistanceMetric(
        MetricKind.MAHALANOBIS,
        mahalanobis_diag=tuple(rng.uniform(0.2, 3.0, size=6)))

    max_gap = 0.0
    triangle_ok = True
    for _ in range(1000):
        a, b, c = rng.normal(size=(3, 6))
        max_gap = max(max_gap, abs(compute_distance(a, b, ident)
                                   - compute_distance(a, b, euclid)))
        for metric in (euclid, manhattan, weighted):
            lhs = compute_distance(a, c, metric)
            rhs = compute_distance(a, b, metric) + compute_distance(b, c, metric)
            if lhs > rhs + 1e-12:
                triangle_ok = False
    detail = (f"|mahalanobis(1) - euclidean| max={max_gap:.2e} (need <= 1e-12), "
              f"triangle inequality={'ok' if triangle_ok else 'VIOLATED'}")
    _report("AC-6", max_gap <= 1e-12 and triangle_ok, detail)


# ------------------------------------------------------------------- AC-7


def test_ac07_oracle_centroid_tracks_ground_truth():
    cfg = {
        "workspace": "table",
        "robot": {"arm": "kuka_iiwa", "gripper": "magnetic",
                  "base_position": [-0.45, 0.0, 0.0]},
        "objects": [{"pool": ["sphere_0.05"], "count": 1,
                     "placement": {"kind": "area", "min": [-0.05, -0.3],
                                   "max": [0.3, 0.3]}}],
        "cameras": [{"name": "main", "position": [0.7, 0.0, 0.55],
                     "look_at": [0.1, 0.0, 0.05], "fov_y": 0.9,
                     "resolution": [128, 128]}],
        "task": {"type": "push", "target": "sphere_0.05",
                 "goal": [0.1, 0.25, 0.05], "success_threshold": 0.06},
        "reward": {"source": "encoder", "encoder": "oracle_centroid",
                   "metric": "euclidean", "shaping": "dense_negative"},
        "randomization": {},
        "observation_mode": "ground_truth",
        "seed": 11,
        "max_steps": 50,
    }
    env = make_env(cfg)
    goal = np.array(cfg["task"]["goal"])
    latent, truth = [], []
    for ep in range(200):
        env.reset(ep)
        obj = env.scene.find_object("sphere_0.05")
        truth.append(float(np.linalg.norm(obj.pose.position.as_array() - goal)))
        latent.append(env.current_distance())
    rho = float(spearmanr(latent, truth).statistic)
    agree = float((np.abs(np.array(latent) - np.array(truth)) < 0.05).mean())
    detail = (f"spearman={rho:.4f} (need >= 0.9), "
              f"within 0.05 m for {agree:.1%} of 200 scenes (need >= 95%)")
    _report("AC-7", rho >= 0.9 and agree >= 0.95, detail)


# ------------------------------------------------------------------- AC-8


def test_ac08_visual_randomization_never_touches_rewards():
    visual = {kind: {"schedule": "on_reset"}
              for kind in ("texture", "color", "light", "postprocess")}
    base = _load("push.json", seed=4)
    plain = make_env(base)
    dressed = make_env(_load("push.json", seed=4, randomization=visual))

    mismatch = 0
    for ep in range(5):
        plain.reset(ep)
        dressed.reset(ep)
        rng = np.random.default_rng(100 + ep)
        for _ in range(40):
            a = rng.uniform(-1, 1, plain.action_dim)
            ra = plain.step(a)
            rb = dressed.step(a)
            if ra.reward != rb.reward or ra.info["distance"] != rb.info["distance"]:
                mismatch += 1

    env = make_env(_load("reach.json",
                         randomization={"joints": {"schedule": "on_reset",
                                                   "jitter": 3.0}}))
    lo, hi = env.robot.joint_limits()
    violations = 0
    qs = []
    for ep in range(10_000):
        env.reset(ep)
        q = env.scene.robot_state.q
        qs.append(q.copy())
        if not ((lo <= q).all() and (q <= hi).all()):
            violations += 1
    spread = float(np.ptp(np.array(qs)[:, 0]))
    detail = (f"reward mismatches with visual randomization={mismatch} (need 0), "
              f"joint-limit violations in 10000 jittered resets={violations} "
              f"(need 0, first-joint spread {spread:.2f} rad)")
    _report("AC-8", mismatch == 0 and violations == 0 and spread > 0.1, detail)


# ------------------------------------------------------------------- AC-9


_REPLAY_SCRIPT = """
import json, sys
import numpy as np
from manipsim.env import make_env

payload = json.load(open(sys.argv[1]))
env = make_env(payload["config"])
out = []
for ep_entry in payload["episodes"]:
    env.reset(ep_entry["episode"])
    for action in ep_entry["actions"]:
        r = env.step(np.array(action))
        poses = {o.id: [o.pose.position.x, o.pose.position.y, o.pose.position.z]
                 for o in env.scene.objects}
        out.append({"reward": r.reward,
                    "distance": r.info["distance"],
                    "q": [float(v) for v in env.scene.robot_state.q],
                    "poses": poses})
json.dump(out, open(sys.argv[2], "w"), sort_keys=True)
"""


def test_ac09_bitwise_replay_and_dataset_regeneration(tmp_path):
    cfg = _load("push.json", seed=6,
                randomization={"joints": {"schedule": "on_reset",
                                          "jitter": 0.2}})
    dim = make_env(cfg).action_dim
    rng = np.random.default_rng(1234)
    episodes = [{"episode": ep,
                 "actions": rng.uniform(-1, 1, size=(30, dim)).tolist()}
                for ep in range(3)]
    payload = tmp_path / "replay_in.json"
    payload.write_text(json.dumps({"config": cfg, "episodes": episodes}))
    script = tmp_path / "replay.py"
    script.write_text(_REPLAY_SCRIPT)

    outputs = []
    for run in ("a", "b"):
        out = tmp_path / f"replay_{run}.json"
        subprocess.run([sys.executable, str(script), str(payload), str(out)],
                       check=True, cwd=tmp_path)
        outputs.append(out.read_bytes())
    replay_ok = outputs[0] == outputs[1] and len(json.loads(outputs[0])) == 90

    ds_cfg = _load("dataset.json")
    trees = []
    for run in ("a", "b"):
        root = tmp_path / f"ds_{run}"
        generate_dataset(ds_cfg, 12, root)
        trees.append({p.relative_to(root).as_posix(): p.read_bytes()
                      for p in sorted(root.rglob("*")) if p.is_file()})
    dataset_ok = trees[0] == trees[1] and len(trees[0]) > 12
    detail = (f"two-process replay identical={replay_ok} (90 steps compared), "
              f"dataset regeneration identical={dataset_ok} "
              f"({len(trees[0])} files compared)")
    _report("AC-9", replay_ok and dataset_ok, detail)


# ------------------------------------------------------------------ AC-10


def test_ac10_hundred_image_dataset_passes_validator(tmp_path):
    root = tmp_path / "ds100"
    generate_dataset(_load("dataset.json"), 100, root)
    report = validate_dataset(root)
    detail = (f"files={report.files_checked} "
              f"annotations={report.annotations_checked} "
              f"centroid checks={report.centroids_checked} "
              f"max_centroid_error={report.max_centroid_error:.3f}px "
              f"(need <= 2), problems={len(report.problems)}")
    _report("AC-10", report.ok and report.centroids_checked > 0
            and report.max_centroid_error <= 2.0, detail)


# ------------------------------------------------------------------ AC-11


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


async def _drive_protocol(port, cfg, headless):
    """The scripted client: create/reset/run_policy/pause/set_object_pose."""
    seen_ticks = []
    rids = iter(f"ac11-{i}" for i in range(1000))

    async def command(ws, kind, **fields):
        rid = next(rids)
        await ws.send(json.dumps({"proto": 1, "type": kind,
                                  "request_id": rid, **fields}))
        return rid

    async def recv(ws):
        msg = json.loads(await asyncio.wait_for(ws.recv(), 30))
        if msg.get("type") == "state":
            seen_ticks.append(msg["tick"])
        return msg

    for attempt in range(60):
        try:
            ws = await websockets.connect(f"ws://127.0.0.1:{port}")
            break
        except OSError:
            await asyncio.sleep(0.1)
    else:
        raise RuntimeError("serve subprocess did not come up")

    async with ws:
        # create_session echoes the request_id and streams the first state
        rid = await command(ws, "create_session", config=cfg)
        reply = await recv(ws)
        assert reply["type"] == "reply" and reply["request_id"] == rid
        sid = reply["session_id"]
        state = await recv(ws)
        assert state["type"] == "state"

        # a clean reset to the acceptance episode
        rid = await command(ws, "reset", session_id=sid, episode=0)
        assert (await recv(ws))["request_id"] == rid
        await recv(ws)

        # greedy policy runs to completion and succeeds like the headless run
        rid = await command(ws, "run_policy", session_id=sid,
                            agent="greedy", hz=50)
        assert (await recv(ws))["request_id"] == rid
        steps = 0
        final = None
        while True:
            msg = await recv(ws)
            assert msg["type"] == "state"
            steps += 1
            if msg["done"]:
                final = msg
                break
        success_ok = (final["success"] is True
                      and steps == headless.steps
                      and final["distance"] == headless.final_distance)

        # fresh episode: step and set_object_pose echo request_ids
        rid = await command(ws, "reset", session_id=sid, episode=1)
        assert (await recv(ws))["request_id"] == rid
        await recv(ws)
        rid = await command(ws, "step", session_id=sid,
                            action=[0.0] * headless_action_dim(cfg))
        assert (await recv(ws))["request_id"] == rid
        await recv(ws)
        rid = await command(ws, "set_object_pose", session_id=sid,
                            id="cube_0.05", position=[0.3, 0.1, 0.025])
        assert (await recv(ws))["request_id"] == rid
        moved = await recv(ws)
        cube = next(o for o in moved["scene"]["objects"]
                    if o["id"] == "cube_0.05")
        pose_ok = cube["position"] == [0.3, 0.1, 0.025]

        # pause: idempotent, echoes, and the stream stays silent afterwards
        await command(ws, "run_policy", session_id=sid, agent="random", hz=10)
        await recv(ws)
        rid = await command(ws, "pause", session_id=sid)
        while True:
            msg = await recv(ws)
            if msg.get("request_id") == rid:
                break
        try:
            await asyncio.wait_for(ws.recv(), 0.4)
            silent = False
        except asyncio.TimeoutError:
            silent = True

    ticks_ok = all(b > a for a, b in zip(seen_ticks, seen_ticks[1:]))
    return success_ok, pose_ok, silent, ticks_ok, steps


def headless_action_dim(cfg):
    return make_env(cfg).action_dim


def test_ac11_scripted_client_against_serve(tmp_path):
    cfg = _load("reach.json", seed=1)
    cfg["objects"] = [{"pool": ["cube_0.05"], "count": 1,
                       "placement": {"kind": "fixed",
                                     "positions": [[0.25, 0.25]]}}]
    headless = run_episode(make_env(cfg), GreedyAgent(), episode=0)
    assert headless.success, "greedy must succeed headlessly first"

    cfg_path = tmp_path / "serve_cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    port = _free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "manipsim.cli", "serve",
         "--config", str(cfg_path), "--bind", f"127.0.0.1:{port}"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    try:
        success_ok, pose_ok, silent, ticks_ok, steps = asyncio.run(
            asyncio.wait_for(_drive_protocol(port, cfg, headless), timeout=60))
    finally:
        proc.terminate()
        proc.wait(timeout=10)
    detail = (f"greedy via protocol matches headless episode "
              f"({steps} steps, success+final distance)={success_ok}, "
              f"set_object_pose echo={pose_ok}, silent after pause={silent}, "
              f"ticks strictly increasing={ticks_ok}")
    _report("AC-11", success_ok and pose_ok and silent and ticks_ok, detail)
