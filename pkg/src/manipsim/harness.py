"""Episode runner, batch evaluation, and cross-entropy policy training.

run_episode drives one agent/environment episode and keeps a full trace;
evaluate aggregates many episodes into an EvalReport with stable CSV/JSON
forms; cem_train fits a linear policy by iterated elite refitting.  All
three derive every random draw from the environment seed and the episode
index, so repeated runs — including runs split across worker processes —
produce identical numbers.
"""

from __future__ import annotations

import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .agents import Agent, LinearPolicyAgent
from .env import Environment, make_env
from .errors import AgentError, ConfigurationError
from .seeding import stream
from .tasks import RewardSource

__all__ = [
    "TraceStep", "EpisodeResult", "run_episode",
    "EvalReport", "evaluate",
    "CurvePoint", "cem_train", "curve_to_csv",
]

# Episode-index blocks.  Evaluation uses small indices (0, 1, 2, ...);
# training draws its rollouts from a disjoint block so that a trained
# policy is never evaluated on an initial state it was fitted to.
_TRAIN_EPISODE_BASE = 1_000_000


# --------------------------------------------------------------- episodes


@dataclass
class TraceStep:
    """One transition: the observation the agent saw, what it did, and
    what came back."""

    observation: object
    action: np.ndarray
    reward: float
    info: Dict[str, object]


@dataclass
class EpisodeResult:
    episode: int
    steps: int
    total_reward: float
    success: bool
    termination: str
    final_distance: float
    trace: List[TraceStep] = field(default_factory=list)


def run_episode(env: Environment, agent: Agent, episode: Optional[int] = None,
                collect_trace: bool = True) -> EpisodeResult:
    """Run one full episode; the trace records (obs, action, reward, info).

    The agent's per-episode random stream is derived from the config seed
    and the episode index, so a given (config, agent, episode) triple
    always replays bitwise identically.
    """
    obs = env.reset(episode)
    ep = env.episode
    agent.reset(env, stream(env.config.seed, ep, "agent"))
    if isinstance(agent, LinearPolicyAgent):
        agent.verify_layout(env)

    total = 0.0
    steps = 0
    trace: List[TraceStep] = []
    termination = "timeout"
    success = False
    final_distance = math.nan
    for _ in range(env.config.max_steps):
        action = np.asarray(agent.act(env, obs), dtype=np.float64)
        if action.shape != (env.action_dim,):
            raise AgentError(
                f"agent {agent.name!r} returned action shape {action.shape}, "
                f"expected ({env.action_dim},) at episode {ep} step {steps}")
        result = env.step(action)
        total += result.reward
        steps += 1
        if collect_trace:
            trace.append(TraceStep(obs, action, result.reward, dict(result.info)))
        obs = result.observation
        final_distance = float(result.info["distance"])
        if result.done:
            termination = result.reason.value if result.reason else "timeout"
            success = termination == "success"
            break
    return EpisodeResult(episode=ep, steps=steps, total_reward=total,
                         success=success, termination=termination,
                         final_distance=final_distance, trace=trace)


# -------------------------------------------------------------- evaluation


_CSV_COLUMNS = ("agent", "task", "robot", "reward", "metric", "n",
                "success_rate", "mean_reward", "std_reward", "mean_len",
                "mean_final_dist")


@dataclass
class EvalReport:
    """Aggregate outcome of n episodes of one agent on one configuration."""

    agent: str
    task: str
    robot: str
    reward: str
    metric: str
    n: int
    success_rate: float
    mean_reward: float
    std_reward: float
    mean_len: float
    mean_final_dist: float
    wall_time: float = 0.0
    config_digest: str = ""

    def to_csv(self) -> str:
        row = []
        for col in _CSV_COLUMNS:
            v = getattr(self, col)
            row.append(repr(v) if isinstance(v, float) else str(v))
        return ",".join(_CSV_COLUMNS) + "\n" + ",".join(row) + "\n"

    @staticmethod
    def from_csv(text: str) -> "EvalReport":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if len(lines) != 2 or lines[0] != ",".join(_CSV_COLUMNS):
            raise ConfigurationError("malformed evaluation CSV")
        cells = lines[1].split(",")
        if len(cells) != len(_CSV_COLUMNS):
            raise ConfigurationError("malformed evaluation CSV row")
        kw: Dict[str, object] = {}
        for col, cell in zip(_CSV_COLUMNS, cells):
            if col == "n":
                kw[col] = int(cell)
            elif col in ("agent", "task", "robot", "reward", "metric"):
                kw[col] = cell
            else:
                kw[col] = float(cell)
        return EvalReport(**kw)  # type: ignore[arg-type]

    def to_json(self) -> str:
        blob = {col: getattr(self, col) for col in _CSV_COLUMNS}
        blob["wall_time"] = self.wall_time
        blob["config_digest"] = self.config_digest
        return json.dumps(blob, indent=1, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        blob = json.loads(text)
        return EvalReport(**{k: blob[k] for k in
                             (*_CSV_COLUMNS, "wall_time", "config_digest")})


def _reward_label(config) -> str:
    spec = config.reward
    if spec.source is RewardSource.ENCODER:
        src = f"encoder:{spec.encoder}"
    else:
        src = spec.source.value
    return f"{src}/{spec.shaping.value}"


def _episode_summary(r: EpisodeResult) -> Tuple[int, float, bool, int, float]:
    return (r.episode, r.total_reward, r.success, r.steps, r.final_distance)


def _eval_worker(raw_config, agent: Agent,
                 episodes: Sequence[int]) -> List[Tuple[int, float, bool, int, float]]:
    env = make_env(raw_config)
    out = []
    for ep in episodes:
        out.append(_episode_summary(
            run_episode(env, agent, episode=ep, collect_trace=False)))
    return out


def evaluate(env: Environment, agent: Agent, n_episodes: int,
             start_episode: int = 0, workers: int = 1) -> EvalReport:
    """Run n episodes (indices start_episode..start_episode+n-1) and
    aggregate.

    With workers > 1 the episode indices are dealt round-robin to worker
    processes and the per-episode results merged back in index order, so
    the report is identical for any worker count.
    """
    if n_episodes <= 0:
        raise ConfigurationError(f"n_episodes must be positive, got {n_episodes}")
    if workers < 1:
        raise ConfigurationError(f"workers must be >= 1, got {workers}")
    t0 = time.perf_counter()
    indices = list(range(start_episode, start_episode + n_episodes))
    if workers == 1 or n_episodes == 1:
        rows = _eval_worker(env.config, agent, indices)
    else:
        shards = [indices[w::workers] for w in range(workers)]
        shards = [s for s in shards if s]
        with ProcessPoolExecutor(max_workers=len(shards)) as pool:
            futures = [pool.submit(_eval_worker, dict(env.config.raw), agent, s)
                       for s in shards]
            rows = [row for f in futures for row in f.result()]
    rows.sort(key=lambda r: r[0])
    rewards = np.array([r[1] for r in rows])
    succ = np.array([r[2] for r in rows], dtype=bool)
    lens = np.array([r[3] for r in rows])
    dists = np.array([r[4] for r in rows])
    cfg = env.config
    return EvalReport(
        agent=agent.name,
        task=cfg.task.type.value,
        robot=cfg.robot.name,
        reward=_reward_label(cfg),
        metric=cfg.reward.metric.kind.value,
        n=n_episodes,
        success_rate=float(succ.mean()),
        mean_reward=float(rewards.mean()),
        std_reward=float(rewards.std()),
        mean_len=float(lens.mean()),
        mean_final_dist=float(dists.mean()),
        wall_time=time.perf_counter() - t0,
        config_digest=cfg.digest(),
    )


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class CurvePoint:
    iteration: int
    mean_elite_reward: float
    best_reward: float


def curve_to_csv(curve: Sequence[CurvePoint]) -> str:
    buf = io.StringIO()
    buf.write("iteration,mean_elite_reward,best_reward\n")
    for pt in curve:
        buf.write(f"{pt.iteration},{pt.mean_elite_reward!r},{pt.best_reward!r}\n")
    return buf.getvalue()


def _candidate_score(env: Environment, agent: LinearPolicyAgent,
                     episodes: Sequence[int]) -> float:
    total = 0.0
    for ep in episodes:
        total += run_episode(env, agent, episode=ep,
                             collect_trace=False).total_reward
    return total / len(episodes)


def cem_train(env: Environment, iterations: int, population: int,
              elite_frac: float, rng: np.random.Generator,
              episodes_per_candidate: int = 10,
              std_init: float = 0.5, std_floor: float = 0.02,
              progress: Optional[Callable[[CurvePoint], None]] = None,
              ) -> Tuple[LinearPolicyAgent, List[CurvePoint]]:
    """Cross-entropy search over linear policies action = clip(W obs + b).

    Each iteration samples `population` parameter vectors from a diagonal
    Gaussian, scores each as the mean total reward over
    `episodes_per_candidate` rollouts, then refits mean and spread to the
    elite fraction.  Every candidate in every iteration is scored on the
    same fixed episode indices: the objective is then a deterministic
    function of the parameters, so elite refitting converges instead of
    chasing per-iteration episode luck.  Score over enough episodes that
    the optimum generalizes — with only a couple of fixed starts the mean
    policy memorizes them and fails on fresh initial states, which is why
    the default is 10 rather than the cheapest setting that still trains.  The returned policy is the final
    distribution mean — it generalizes to unseen initial states markedly
    better than the single best-scoring candidate, which is selected by
    its luck on the scoring episodes.  With iterations == 0 the initial
    random draw is returned untouched.
    """
    if population < 4:
        raise ConfigurationError(
            f"population must be at least 4, got {population}")
    if not (0.0 < elite_frac < 1.0):
        raise ConfigurationError(
            f"elite_frac must lie strictly between 0 and 1, got {elite_frac}")
    if iterations < 0:
        raise ConfigurationError(f"iterations must be >= 0, got {iterations}")
    if episodes_per_candidate < 1:
        raise ConfigurationError("episodes_per_candidate must be >= 1")

    obs_dim = env.observation_dim
    act_dim = env.action_dim
    dim = act_dim * obs_dim + act_dim
    digest = env.observation_digest()
    n_elite = max(1, int(population * elite_frac))

    mean = np.zeros(dim)
    std = np.full(dim, std_init)
    theta_init = mean + std * rng.standard_normal(dim)
    best_score = -math.inf
    episodes = [_TRAIN_EPISODE_BASE + j for j in range(episodes_per_candidate)]

    curve: List[CurvePoint] = []
    for t in range(1, iterations + 1):
        thetas = mean + std * rng.standard_normal((population, dim))
        scores = np.empty(population)
        for i in range(population):
            agent = LinearPolicyAgent.from_flat(thetas[i], obs_dim, act_dim)
            scores[i] = _candidate_score(env, agent, episodes)
        order = np.argsort(-scores, kind="stable")
        elites = thetas[order[:n_elite]]
        elite_scores = scores[order[:n_elite]]
        best_score = max(best_score, float(scores[order[0]]))
        mean = elites.mean(axis=0)
        std = np.maximum(elites.std(axis=0), std_floor)
        point = CurvePoint(iteration=t,
                           mean_elite_reward=float(elite_scores.mean()),
                           best_reward=best_score)
        curve.append(point)
        if progress is not None:
            progress(point)

    theta = theta_init if iterations == 0 else mean
    policy = LinearPolicyAgent.from_flat(theta, obs_dim, act_dim)
    policy.obs_digest = digest
    return policy, curve
