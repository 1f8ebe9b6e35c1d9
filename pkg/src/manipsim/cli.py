"""Single command-line entry point: validate, train, eval, dataset, serve,
list.

Exit codes: 0 success, 2 configuration error, 3 runtime error. With
``--json`` errors are emitted as one JSON object on stderr instead of
prose. ``--seed`` and ``--max-steps`` override the config file; the
resolved configuration's digest is embedded in every written artifact so
outputs are traceable to the exact settings that produced them.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Any, Dict, Optional

from .errors import ConfigurationError, ManipSimError, ProtocolError, SpawnError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_CONFIG_ERRORS = (ConfigurationError, SpawnError, ProtocolError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manipsim",
        description="Deterministic robotic-manipulation simulation toolkit.")
    parser.add_argument("--json", action="store_true",
                        help="emit machine-readable error JSON on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, config=True):
        p = sub.add_parser(name, help=help_text)
        # SUPPRESS keeps a pre-subcommand `--json` from being reset to False
        p.add_argument("--json", action="store_true",
                       default=argparse.SUPPRESS,
                       help="emit machine-readable error JSON on stderr")
        if config:
            p.add_argument("--config", required=True,
                           help="environment configuration JSON file")
            p.add_argument("--seed", type=int, default=None,
                           help="override the config file's seed")
            p.add_argument("--max-steps", type=int, default=None,
                           help="override the config file's episode length")
        return p

    p = add("validate", "check a configuration file and report problems")

    p = add("train", "cross-entropy train a linear policy")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--iterations", type=int, default=30)
    p.add_argument("--population", type=int, default=32)
    p.add_argument("--elite-frac", type=float, default=0.2)
    p.add_argument("--episodes-per-candidate", type=int, default=10)
    p.add_argument("--quiet", action="store_true",
                   help="suppress per-iteration progress on stderr")

    p = add("eval", "run an agent and write an evaluation report")
    p.add_argument("--agent", required=True,
                   help="'random', 'greedy', or a policy JSON file")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--start-episode", type=int, default=0)
    p.add_argument("--workers", type=int, default=1,
                   help="parallel episode workers (same result any count)")
    p.add_argument("--out", default=None,
                   help="directory for eval.csv and eval.json")

    p = add("dataset", "render an annotated image dataset")
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--images", type=int, required=True,
                   help="number of samples to render")
    p.add_argument("--check", action="store_true",
                   help="validate files and annotations after writing")

    p = add("serve", "run the WebSocket session service")
    p.add_argument("--bind", default="127.0.0.1:8700", help="HOST:PORT")
    p.add_argument("--max-sessions", type=int, default=16)
    p.add_argument("--timeout", type=float, default=600.0,
                   help="idle seconds before a session is closed")
    p.add_argument("--ui-dir", default=None,
                   help="serve this directory over plain HTTP (the test UI)")
    p.add_argument("--policy", default=None,
                   help="policy file for run_policy{agent: cem_file}")

    add("list", "print the built-in catalogs", config=False)
    return parser


def _effective_config(args):
    """Parsed config with --seed/--max-steps folded in; errors name the file."""
    from .config import parse_config

    path = Path(args.config)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {path} must be a JSON object")
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.max_steps is not None:
        raw["max_steps"] = args.max_steps
    try:
        return parse_config(raw)
    except _CONFIG_ERRORS as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


def _cmd_validate(args) -> int:
    cfg = _effective_config(args)
    print(f"ok: {args.config}")
    print(f"digest={cfg.digest()}")
    print(f"robot={cfg.robot.name} task={cfg.task.type.value} "
          f"object_groups={len(cfg.spawns)} cameras={len(cfg.cameras)} "
          f"seed={cfg.seed} max_steps={cfg.max_steps}")
    return EXIT_OK


def _cmd_train(args) -> int:
    from .env import make_env
    from .harness import cem_train, curve_to_csv
    from .seeding import stream

    env = make_env(_effective_config(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    progress = None
    if not args.quiet:
        def progress(pt):
            print(f"iteration {pt.iteration}/{args.iterations} "
                  f"mean_elite_reward={pt.mean_elite_reward:.4f} "
                  f"best_reward={pt.best_reward:.4f}", file=sys.stderr)

    started = time.perf_counter()
    policy, curve = cem_train(
        env,
        iterations=args.iterations,
        population=args.population,
        elite_frac=args.elite_frac,
        rng=stream(env.config.seed, 0, "cem"),
        episodes_per_candidate=args.episodes_per_candidate,
        progress=progress)
    elapsed = time.perf_counter() - started

    policy_path = out / "policy.json"
    policy.save(policy_path, meta={"config_digest": env.config.digest(),
                                   "seed": env.config.seed,
                                   "iterations": args.iterations,
                                   "population": args.population,
                                   "elite_frac": args.elite_frac})
    (out / "curve.csv").write_text(curve_to_csv(curve), encoding="utf-8")
    best = curve[-1].best_reward if curve else None
    (out / "train.json").write_text(json.dumps({
        "config_digest": env.config.digest(),
        "seed": env.config.seed,
        "iterations": args.iterations,
        "population": args.population,
        "elite_frac": args.elite_frac,
        "episodes_per_candidate": args.episodes_per_candidate,
        "best_reward": best,
        "wall_time": elapsed,
    }, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"policy={policy_path}")
    print(f"curve={out / 'curve.csv'}")
    if best is not None:
        print(f"best_reward={best!r}")
    return EXIT_OK


def _resolve_agent(name: str):
    from .agents import make_agent
    if name in ("random", "greedy"):
        return make_agent(name), name
    try:
        agent = make_agent("cem_file", policy_path=name)
    except OSError as exc:
        raise ConfigurationError(f"cannot read policy file {name}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"policy file {name} is not JSON: {exc}") from None
    return agent, f"cem_file:{Path(name).name}"


def _cmd_eval(args) -> int:
    from .env import make_env
    from .harness import evaluate

    env = make_env(_effective_config(args))
    agent, label = _resolve_agent(args.agent)
    report = evaluate(env, agent, args.episodes,
                      start_episode=args.start_episode,
                      workers=args.workers)
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.csv").write_text(report.to_csv(), encoding="utf-8")
        (out / "eval.json").write_text(report.to_json(), encoding="utf-8")
        print(f"report={out / 'eval.csv'}")
    print(f"agent={label} episodes={report.n}")
    print(f"success_rate={report.success_rate!r}")
    print(f"mean_reward={report.mean_reward!r}")
    return EXIT_OK


def _cmd_dataset(args) -> int:
    from .dataset import generate_dataset, validate_dataset

    cfg = _effective_config(args)
    manifest = generate_dataset(cfg, args.images, args.out)
    print(f"manifest={Path(args.out) / 'manifest.json'}")
    print(f"images={manifest['n_images']} cameras={len(manifest['cameras'])}")
    if args.check:
        report = validate_dataset(args.out)
        print(f"checked: files={report.files_checked} "
              f"annotations={report.annotations_checked} "
              f"centroids={report.centroids_checked} "
              f"max_centroid_error={report.max_centroid_error:.3f}px")
        if not report.ok:
            for problem in report.problems:
                print(f"problem: {problem}", file=sys.stderr)
            raise ManipSimError(
                f"dataset validation found {len(report.problems)} problem(s)")
        print("validation=ok")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .server import run_server

    cfg = _effective_config(args)
    print(f"serving on ws://{args.bind} "
          f"(max_sessions={args.max_sessions}, timeout={args.timeout}s)",
          file=sys.stderr)
    run_server(args.bind,
               max_sessions=args.max_sessions,
               idle_timeout=args.timeout,
               ui_dir=args.ui_dir,
               policy_path=args.policy,
               default_config=dict(cfg.raw))
    return EXIT_OK


def _cmd_list(args) -> int:
    from .catalog import (gripper_names, object_catalog, robot_names,
                          workspace_catalog)
    from .geometry import MetricKind
    from .perception.encoders import encoder_names

    sections = {
        "robots": list(robot_names()),
        "grippers": list(gripper_names()),
        "workspaces": sorted(workspace_catalog()),
        "objects": sorted(object_catalog()),
        "encoders": list(encoder_names()),
        "metrics": [m.value for m in MetricKind],
    }
    if getattr(args, "json", False):
        print(json.dumps(sections, indent=1))
    else:
        for title, names in sections.items():
            print(f"{title}:")
            for name in names:
                print(f"  {name}")
    return EXIT_OK


_DISPATCH = {
    "validate": _cmd_validate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "dataset": _cmd_dataset,
    "serve": _cmd_serve,
    "list": _cmd_list,
}


def _report_error(exc: Exception, code: int, as_json: bool) -> None:
    if as_json:
        payload = {"error": {"exit_code": code,
                             "type": type(exc).__name__,
                             "message": str(exc)}}
        print(json.dumps(payload), file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)


def main(argv: Optional[list] = None) -> int:
    args = _build_parser().parse_args(argv)
    as_json = getattr(args, "json", False)
    try:
        return _DISPATCH[args.command](args)
    except _CONFIG_ERRORS as exc:
        _report_error(exc, EXIT_CONFIG, as_json)
        return EXIT_CONFIG
    except ManipSimError as exc:
        _report_error(exc, EXIT_RUNTIME, as_json)
        return EXIT_RUNTIME
    except OSError as exc:
        _report_error(exc, EXIT_RUNTIME, as_json)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
