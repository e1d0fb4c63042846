"""Command-line entry point: ``resid-insert {train,eval,ablation,compare,demo}``."""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from typing import List, Optional

from .agent import ACTIONS, QTable, decode_index
from .config import (
    ABLATIONS,
    BASELINES,
    ConfigError,
    ExperimentConfig,
    ablation_config,
    comparison_config,
    load_config,
    resolve_seed,
)
from .experiments import (
    ResultTable,
    comparison_trial,
    evaluate,
    run_ablation,
    run_comparison,
    train_agent,
)
from .persistence import save_episodes, save_results

COMMANDS = ("train", "eval", "ablation", "compare", "demo")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="resid-insert", description="Visual residual Q-learning for tight-clearance insertion.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", default="default", help="config file path or preset name (default, ram_slot, ssd_slot)")
    p.add_argument("--seed", type=int, default=None, help="overrides RESID_INSERT_SEED and the config")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--out", default="run", help="output directory")
    p.add_argument("--baseline", default=None, choices=BASELINES + ABLATIONS,
                   help="condition for eval/demo; restricts compare to one baseline")
    p.add_argument("--no-noise", action="store_true", help="disable camera and wrench noise")
    return p


def _config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    if args.baseline is not None and args.baseline in BASELINES:
        cfg = replace(cfg, baseline=args.baseline)
    cfg = replace(cfg, seed=resolve_seed(args.seed, cfg.seed))
    if args.no_noise:
        cfg = cfg.without_noise()
    return cfg


def _qtable(cfg: ExperimentConfig, out: str) -> QTable:
    """Reuse ``out/qtable.txt`` when present, else train and save it."""
    path = os.path.join(out, "qtable.txt")
    if os.path.exists(path):
        print(f"using trained table {path}")
        return QTable.load(path)
    t0 = time.perf_counter()
    result = train_agent(ablation_config(cfg), cfg.seed)
    os.makedirs(out, exist_ok=True)
    result.qtable.save(path)
    wins = sum(result.successes[-100:])
    print(f"trained {cfg.train_episodes} episodes in {time.perf_counter() - t0:.1f} s "
          f"({wins}/{min(100, len(result.successes))} successes in the last 100); wrote {path}")
    return result.qtable


def _report(table: ResultTable, out: str) -> None:
    save_results(table, out)
    with open(os.path.join(out, "results.txt"), encoding="utf-8") as fh:
        print(fh.read(), end="")


def cmd_train(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    path = os.path.join(args.out, "qtable.txt")
    if os.path.exists(path):
        os.remove(path)
    _qtable(cfg, args.out)


def cmd_eval(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    q = _qtable(cfg, args.out)
    name = args.baseline or "full"
    if name in ABLATIONS:
        table, trials = evaluate(ablation_config(cfg), q, condition=name)
    else:
        table, logs = run_comparison(cfg, q, names=(name,))
        table = ResultTable("eval", table.rows)
        trials = logs[f"{name}/moved"]
    _report(table, args.out)
    save_episodes([t.log for t in trials], args.out)


def cmd_ablation(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    q = _qtable(cfg, args.out)
    table, logs = run_ablation(cfg, q)
    _report(table, args.out)
    save_episodes([t.log for t in logs["full"]], args.out)


def cmd_compare(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    q = _qtable(cfg, args.out)
    names = (args.baseline,) if args.baseline in BASELINES else BASELINES
    table, logs = run_comparison(cfg, q, names=names)
    _report(table, args.out)
    save_episodes([t.log for t in logs[f"{names[0]}/moved"]], args.out)


def cmd_demo(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    q = _qtable(cfg, args.out)
    name = args.baseline or "full"
    if name in ABLATIONS:
        _, trials = evaluate(replace(ablation_config(cfg), trials=1), q, condition=name)
        trial = trials[0]
    else:
        trial = comparison_trial(comparison_config(cfg), name, True, q.values, cfg.seed, 0)
    log = trial.log
    print(f"demo: {name}, seed {cfg.seed}")
    print("step  state                 action  probed  reward   Fz      My")
    for r in log.steps:
        action = ACTIONS[r.action_id].name if r.action_id >= 0 else "-"
        code = "".join("+" if c > 0 else "-" if c < 0 else "0" for c in decode_index(r.state_index))
        print(f"{r.step:4d}  {code:20s}  {action:6s}  {str(r.probed):6s}  {r.reward:7.3f}  "
              f"{r.wrench[2]:6.2f}  {r.wrench[4]:6.3f}")
    print(f"outcome: {log.outcome.value} after {log.n_steps} steps")
    save_episodes([log], args.out)


HANDLERS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "ablation": cmd_ablation,
    "compare": cmd_compare,
    "demo": cmd_demo,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"resid-insert: config error: {exc}", file=sys.stderr)
        return 2
    HANDLERS[args.command](cfg, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
