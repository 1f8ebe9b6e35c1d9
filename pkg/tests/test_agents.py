"""Scripted agents and the policy container."""

import importlib.resources as ir

import numpy as np
import pytest

from manipsim.agents import (GreedyAgent, LinearPolicyAgent, RandomAgent,
                             make_agent)
from manipsim.env import make_env
from manipsim.errors import AgentError, ConfigurationError
from manipsim.harness import run_episode

_CONFIGS = ir.files("manipsim") / "data/configs"


def test_greedy_reaches_fixed_goal():
    env = make_env(str(_CONFIGS / "reach.json"))
    for ep in range(10):
        r = run_episode(env, GreedyAgent(), episode=ep)
        assert r.success, f"episode {ep}: {r.termination} d={r.final_distance}"
        assert r.steps < 60


def test_greedy_pick_and_place_attaches_then_releases():
    env = make_env(str(_CONFIGS / "pick_place.json"))
    r = run_episode(env, GreedyAgent(), episode=0)
    assert r.success
    held = [s.info["attached"] for s in r.trace]
    first_hold = next(i for i, h in enumerate(held) if h is not None)
    final_free = next(i for i in range(len(held) - 1, -1, -1)
                      if held[i] is not None) + 1
    assert held[first_hold] == "cube_0.05"
    assert first_hold < final_free <= len(held)
    assert all(h is None for h in held[final_free:])


def test_random_agent_is_reproducible_per_episode():
    env = make_env(str(_CONFIGS / "reach.json"))
    def actions(ep):
        r = run_episode(env, RandomAgent(), episode=ep)
        return [tuple(s.action) for s in r.trace]
    assert actions(2) == actions(2)
    assert actions(2) != actions(3)


def test_random_agent_requires_reset():
    env = make_env(str(_CONFIGS / "reach.json"))
    env.reset(0)
    agent = RandomAgent()
    with pytest.raises(AgentError):
        agent.act(env, None)


def test_make_agent_names():
    assert isinstance(make_agent("random"), RandomAgent)
    assert isinstance(make_agent("greedy"), GreedyAgent)
    with pytest.raises(ConfigurationError):
        make_agent("daydreamer")
    with pytest.raises(ConfigurationError):
        make_agent("cem_file")  # needs a policy path


def test_linear_policy_shape_validation():
    with pytest.raises(ConfigurationError):
        LinearPolicyAgent(np.zeros(4), np.zeros(2))
    with pytest.raises(ConfigurationError):
        LinearPolicyAgent(np.zeros((2, 3)), np.zeros(3))
    with pytest.raises(ConfigurationError):
        LinearPolicyAgent.from_flat(np.zeros(7), obs_dim=3, action_dim=2)


def test_linear_policy_clips_actions():
    env = make_env(str(_CONFIGS / "reach.json"))
    obs = env.reset(0)
    big = LinearPolicyAgent(np.full((env.action_dim, env.observation_dim), 50.0),
                            np.zeros(env.action_dim))
    a = big.act(env, obs)
    assert (np.abs(a) <= 1.0).all()
    assert (np.abs(a) == 1.0).any()


def test_linear_policy_rejects_wrong_obs_length():
    env = make_env(str(_CONFIGS / "reach.json"))
    obs = env.reset(0)
    policy = LinearPolicyAgent(np.zeros((env.action_dim, 3)), np.zeros(env.action_dim))
    with pytest.raises(AgentError):
        policy.act(env, obs)
