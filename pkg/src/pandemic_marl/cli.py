"""Command-line entry point: ``pandemic-marl <command> [options]``.

Exit codes: 0 success, 1 usage error (bad flag, unreadable input),
2 runtime failure, 3 sweep finished with failed cells.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import oracles
from .errors import ConfigurationError, PandemicMarlError
from .evaluation import (
    baseline_policies,
    compute_metrics,
    load_policy,
    metrics_document,
    run_episode,
    seed_metrics,
    sweep,
    type_wise,
    write_json,
    write_table_csv,
    write_timeseries_csv,
)
from .learner import TrainConfig, load_train_config, train
from .policies import FixedPolicy, ThresholdPolicy
from .scenario import SCHEMA_VERSION, builtin_scenario_path, load_scenario

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3
DEFAULT_ALPHAS = (0.01, 0.4, 10.0)

log = logging.getLogger("pandemic_marl")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", type=Path, default=None,
                        help="scenario YAML/JSON (default: the built-in outbreak scenario)")
    common.add_argument("--output-dir", type=Path, default=Path("results"),
                        help="directory for metrics, time series and checkpoints")
    common.add_argument("--seed", type=int, default=0, help="evaluation rollout seed")
    common.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--config", type=Path, default=None,
                          help="training config YAML (default: the calibrated config)")
    training.add_argument("--seeds", type=int, nargs="+", default=None,
                          help="training seeds (overrides the config)")
    training.add_argument("--episodes", type=int, default=None,
                          help="episodes per seed (overrides the config)")

    baseline = argparse.ArgumentParser(add_help=False)
    baseline.add_argument("--p-fix", type=float, default=0.5, help="fixed policy share")
    baseline.add_argument("--h-th", type=float, default=1.0,
                          help="threshold policy hospitalization trigger")
    baseline.add_argument("--l-th", type=float, default=168.0,
                          help="threshold policy lockdown-penalty cap")

    parser = _Parser(prog="pandemic-marl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common, baseline], help="roll out a baseline policy")
    p.add_argument("--policy", choices=["fixed", "threshold"], default="fixed")

    p = sub.add_parser("train", parents=[common, training], help="train an IRC model")
    p.add_argument("--alpha", type=float, default=None, help="reward mixing ratio")

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a trained checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)

    p = sub.add_parser("sweep", parents=[common, training, baseline],
                       help="baselines plus one trained model per alpha")
    p.add_argument("--alphas", type=float, nargs="*", default=list(DEFAULT_ALPHAS))

    p = sub.add_parser("oracle-check", parents=[common],
                       help="run the brute-force equivalence suites")
    return parser


def _scenario(args):
    path = args.scenario or builtin_scenario_path("outbreak")
    if not Path(path).is_file():
        raise UsageError(f"scenario file not found: {path}")
    return load_scenario(path)


def _train_config(args) -> TrainConfig:
    if args.config is not None and not args.config.is_file():
        raise UsageError(f"config file not found: {args.config}")
    config = load_train_config(args.config)
    changes = {}
    if args.seeds is not None:
        changes["seeds"] = args.seeds
    if args.episodes is not None:
        changes["episodes"] = args.episodes
    if getattr(args, "alpha", None) is not None:
        changes["alpha"] = args.alpha
    return config.replace(**changes) if changes else config


def _report(traj, scenario, out_dir: Path, stem: str, extra=None):
    report = compute_metrics(traj)
    types = type_wise(traj, scenario)
    doc = metrics_document(report, traj, {"type_wise": types.to_dict(), **(extra or {})})
    write_json(out_dir / f"{stem}_metrics.json", doc)
    write_timeseries_csv(out_dir / f"{stem}_timeseries.csv", traj, report, types)
    traj.save(out_dir / f"{stem}_trajectory.npz")
    print(json.dumps({"command": stem, **report.summary()}, sort_keys=True))
    return report


def cmd_simulate(args):
    scenario = _scenario(args)
    if args.policy == "fixed":
        policy = FixedPolicy(args.p_fix)
    else:
        policy = ThresholdPolicy(args.h_th, args.l_th, scenario)
    traj = run_episode(policy, scenario, args.seed)
    _report(traj, scenario, args.output_dir, f"simulate_{args.policy}")
    return EXIT_OK


def cmd_train(args):
    scenario = _scenario(args)
    config = _train_config(args)
    result = train(config, scenario)
    out = args.output_dir
    seeds = seed_metrics(result, scenario, args.seed)
    result.save(out / "checkpoint.npz", extra={"seed_metrics": seeds})
    result.write_log(out / "train_log.jsonl")
    traj = run_episode(result.policy(), scenario, args.seed)
    _report(traj, scenario, out, "train", {"train_config": config.to_dict(),
                                           "best_seed": result.best_seed,
                                           "seed_metrics": seeds})
    diverged = [s.seed for s in result.seeds if s.diverged]
    if result.best_seed is None:
        print("error: every seed diverged", file=sys.stderr)
        return EXIT_RUNTIME
    if diverged:
        log.warning("seeds %s diverged; see train_log.jsonl", diverged)
    return EXIT_OK


def cmd_evaluate(args):
    if not args.checkpoint.is_file():
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    scenario = _scenario(args)
    policy, meta = load_policy(args.checkpoint)
    if len(meta["featurizer"]["population"]) != scenario.n_regions:
        raise UsageError("checkpoint was trained on a scenario with a different region count")
    traj = run_episode(policy, scenario, args.seed)
    _report(traj, scenario, args.output_dir, "evaluate",
            {"checkpoint": {"train_config": meta.get("config"),
                            "best_seed": meta.get("best_seed")}})
    return EXIT_OK


def cmd_sweep(args):
    scenario = _scenario(args)
    config = _train_config(args)
    out = args.output_dir
    baselines = baseline_policies(args.p_fix, args.h_th, args.l_th, scenario)
    rows = sweep(args.alphas, config, scenario, out, args.seed, baselines,
                 progress=lambda row: print(json.dumps(
                     {k: row.get(k) for k in ("model", "parameter", "mean_global_reward",
                                              "status")}), flush=True))
    write_table_csv(out / "sweep_table.csv", rows)
    write_json(out / "sweep_table.json", {"schema_version": SCHEMA_VERSION, "kind": "sweep",
                                          "train_config": config.to_dict(),
                                          "scenario": scenario.to_dict(), "rows": rows})
    failed = [r for r in rows if r["status"] != "ok"]
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_oracle_check(args):
    results = oracles.run_all(seed=args.seed)
    for r in results:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']}: "
              f"max error {r['max_rel_error']} ({r['seconds']:.2f} s)")
    doc = {"schema_version": SCHEMA_VERSION, "kind": "oracle-check",
           "results": [{k: v for k, v in r.items() if k != "seconds"} for r in results]}
    write_json(args.output_dir / "oracle_check.json", _plain(doc))
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_RUNTIME


def _plain(value):
    """numpy scalars -> Python scalars, recursively (for JSON)."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item"):
        return value.item()
    return value


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "evaluate": cmd_evaluate,
            "sweep": cmd_sweep, "oracle-check": cmd_oracle_check}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"pandemic-marl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as exc:
        print(f"pandemic-marl: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PandemicMarlError, OSError) as exc:
        print(f"pandemic-marl: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
