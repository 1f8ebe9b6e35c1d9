"""Episode runner, evaluation reports, and cross-entropy training."""

import json

import numpy as np
import pytest

from manipsim.agents import Agent, GreedyAgent, LinearPolicyAgent, RandomAgent
from manipsim.env import make_env
from manipsim.errors import AgentError, ConfigurationError
from manipsim.harness import (EvalReport, cem_train, curve_to_csv, evaluate,
                              run_episode)
from manipsim.seeding import stream


def _config(max_steps=20, shaping="dense_delta"):
    return {
        "workspace": "table",
        "robot": {"arm": "kuka_iiwa", "gripper": "magnetic",
                  "base_position": [-0.45, 0.0, 0.0]},
        "objects": [],
        "cameras": [],
        "task": {"type": "reach", "target": "ee", "goal": [0.25, -0.3, 0.35],
                 "success_threshold": 0.05},
        "reward": {"source": "ground_truth", "metric": {"kind": "euclidean"},
                   "shaping": shaping},
        "randomization": {"joints": {"schedule": "on_reset", "jitter": 0.15}},
        "observation_mode": "ground_truth",
        "seed": 1,
        "max_steps": max_steps,
    }


# ------------------------------------------------------------ run_episode


def test_run_episode_respects_step_budget():
    env = make_env(_config(max_steps=7))
    r = run_episode(env, RandomAgent(), episode=0)
    assert r.steps <= 7
    if not r.success:
        assert r.termination == "timeout"
    assert len(r.trace) == r.steps


def test_run_episode_totals_match_trace():
    env = make_env(_config(max_steps=40))
    r = run_episode(env, GreedyAgent(), episode=1)
    assert r.total_reward == pytest.approx(sum(s.reward for s in r.trace))
    assert r.final_distance == r.trace[-1].info["distance"]


def test_dense_delta_total_telescopes_to_distance_drop():
    # the first step pays 0, so the total telescopes from the distance
    # observed after the first step down to the final distance
    env = make_env(_config(max_steps=60))
    r = run_episode(env, GreedyAgent(), episode=5)
    d_first = r.trace[0].info["distance"]
    assert r.total_reward == pytest.approx(d_first - r.final_distance)


def test_run_episode_rejects_malformed_agent():
    class Broken(Agent):
        name = "broken"
        def act(self, env, obs):
            return np.zeros(env.action_dim + 2)

    env = make_env(_config())
    with pytest.raises(AgentError) as err:
        run_episode(env, Broken(), episode=0)
    assert "broken" in str(err.value)


# --------------------------------------------------------------- evaluate


def test_evaluate_report_fields_and_roundtrip():
    env = make_env(_config(max_steps=30))
    rep = evaluate(env, GreedyAgent(), 5)
    assert rep.n == 5
    assert rep.agent == "greedy"
    assert rep.task == "reach"
    assert rep.robot == "kuka_iiwa"
    assert rep.reward == "ground_truth/dense_delta"
    assert rep.metric == "euclidean"
    assert 0.0 <= rep.success_rate <= 1.0
    assert rep.config_digest == env.config.digest()
    assert rep.wall_time > 0

    csv_text = rep.to_csv()
    assert csv_text.splitlines()[0] == (
        "agent,task,robot,reward,metric,n,success_rate,mean_reward,"
        "std_reward,mean_len,mean_final_dist")
    assert EvalReport.from_csv(csv_text).to_csv() == csv_text
    assert EvalReport.from_json(rep.to_json()).to_json() == rep.to_json()


def test_evaluate_worker_counts_agree():
    env = make_env(_config(max_steps=25))
    solo = evaluate(env, GreedyAgent(), 6, workers=1)
    multi = evaluate(env, GreedyAgent(), 6, workers=3)
    assert solo.to_csv() == multi.to_csv()


def test_evaluate_is_deterministic_across_calls():
    env = make_env(_config(max_steps=25))
    a = evaluate(env, RandomAgent(), 4)
    b = evaluate(env, RandomAgent(), 4)
    assert a.to_csv() == b.to_csv()


def test_evaluate_start_episode_shifts_draws():
    env = make_env(_config(max_steps=25))
    a = evaluate(env, RandomAgent(), 4, start_episode=0)
    b = evaluate(env, RandomAgent(), 4, start_episode=100)
    assert a.to_csv() != b.to_csv()


def test_evaluate_argument_validation():
    env = make_env(_config())
    with pytest.raises(ConfigurationError):
        evaluate(env, GreedyAgent(), 0)
    with pytest.raises(ConfigurationError):
        evaluate(env, GreedyAgent(), 3, workers=0)


# -------------------------------------------------------------- cem_train


def test_cem_validates_hyperparameters():
    env = make_env(_config(max_steps=5))
    rng = stream(1, 0, "cem")
    with pytest.raises(ConfigurationError):
        cem_train(env, 1, 3, 0.2, rng)
    with pytest.raises(ConfigurationError):
        cem_train(env, 1, 8, 0.0, rng)
    with pytest.raises(ConfigurationError):
        cem_train(env, 1, 8, 1.0, rng)
    with pytest.raises(ConfigurationError):
        cem_train(env, -1, 8, 0.2, rng)


def test_cem_zero_iterations_returns_untrained_draw():
    env = make_env(_config(max_steps=5))
    p1, c1 = cem_train(env, 0, 8, 0.25, stream(1, 0, "cem"))
    p2, c2 = cem_train(env, 0, 8, 0.25, stream(1, 0, "cem"))
    assert c1 == [] and c2 == []
    assert (p1.weights == p2.weights).all() and (p1.bias == p2.bias).all()
    assert p1.obs_digest == env.observation_digest()


def test_cem_curve_is_deterministic_and_well_formed():
    env = make_env(_config(max_steps=8, shaping="dense_negative"))
    p1, c1 = cem_train(env, 3, 6, 0.34, stream(1, 0, "cem"))
    p2, c2 = cem_train(env, 3, 6, 0.34, stream(1, 0, "cem"))
    assert curve_to_csv(c1) == curve_to_csv(c2)
    assert (p1.weights == p2.weights).all()
    assert [pt.iteration for pt in c1] == [1, 2, 3]
    # best-so-far tracking never decreases
    bests = [pt.best_reward for pt in c1]
    assert bests == sorted(bests)
    header = curve_to_csv(c1).splitlines()[0]
    assert header == "iteration,mean_elite_reward,best_reward"


def test_cem_policy_file_runs_through_make_agent(tmp_path):
    from manipsim.agents import make_agent
    env = make_env(_config(max_steps=8))
    policy, _ = cem_train(env, 1, 6, 0.34, stream(1, 0, "cem"))
    path = tmp_path / "policy.json"
    policy.save(path, meta={"note": "unit"})
    agent = make_agent("cem_file", policy_path=path)
    r = run_episode(env, agent, episode=0)
    assert r.steps >= 1
    blob = json.loads(path.read_text())
    assert blob["kind"] == "linear"
    assert blob["obs_digest"] == env.observation_digest()
