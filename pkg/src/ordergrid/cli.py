"""Command-line entry point.

Exit codes: 0 on success, 1 for user errors (bad flags, bad files, bad
config), 2 for anything unexpected.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import config as config_mod
from .agent import TrainingError, train
from .config import ConfigError
from .env import EnvError, GridWorld, RewardConfig, render_ascii, save_layout, write_trace
from .experiment import (ExperimentError, ExperimentSpec, GreedyPolicy, OraclePolicy,
                         cell_record, format_table, load_results, run_experiment)
from .gradcheck import run_all
from .language import (LanguageError, LanguageSubset, SplitSpec, dump_language,
                       enumerate_instructions, load_language, parse, resolve_plan,
                       split_train_test, to_record, validate)
from .qnet import QNetError, QNetwork, load_checkpoint, save_checkpoint
from .replay import ReplayError, priority_report, save_priority_state

USER_ERRORS = (ConfigError, LanguageError, EnvError, QNetError, ReplayError, ExperimentError,
               TrainingError, OSError, json.JSONDecodeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ----------------------------------------------------------------- helpers

def _resolve_config(args) -> dict:
    overrides = list(args.set or [])
    for flag, key in (("subset", "language.subset"), ("proportion", "language.proportion"),
                      ("epochs", "train.epochs"), ("fusion", "network.fusion"),
                      ("replay", "replay.mode")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{key}={json.dumps(value)}")
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    return config_mod.load_config(getattr(args, "config", None), overrides)


def _spec(cfg: dict, layout) -> ExperimentSpec:
    return ExperimentSpec(
        subset=LanguageSubset.parse(cfg["language.subset"]),
        fusion=cfg["network.fusion"],
        replay=cfg["replay.mode"],
        proportions=tuple(cfg["experiment.proportions"]),
        seeds=tuple(cfg["experiment.seeds"]),
        epochs=int(cfg["train.epochs"]),
        layout=layout,
    )


def _write_json_line(fh, record) -> None:
    fh.write(json.dumps(record) + "\n")


def _load_run(run_dir: Path, checkpoint=None):
    cfg = config_mod.load_config(run_dir / "config.txt")
    cfg["layout.path"] = str(run_dir / "layout.json")
    layout = config_mod.build_layout(cfg)
    agent_cfg = config_mod.build_agent_config(cfg, layout)
    ckpt = Path(checkpoint) if checkpoint else run_dir / "checkpoints" / "final.ckpt"
    params = load_checkpoint(ckpt, agent_cfg.network)
    return cfg, layout, agent_cfg, params


# ---------------------------------------------------------------- commands

def cmd_gen_lang(args) -> int:
    subset = LanguageSubset.parse(args.subset)
    instructions = enumerate_instructions(subset, args.min, args.max)
    if args.out:
        dump_language(instructions, args.out)
    else:
        for instr in instructions:
            _write_json_line(sys.stdout, to_record(instr))
    print(f"{len(instructions)} instructions", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    layout = config_mod.build_layout(cfg)
    agent_cfg = config_mod.build_agent_config(cfg, layout)
    spec = _spec(cfg, layout)
    proportion = float(cfg["language.proportion"])
    train_instr, test_instr = split_train_test(spec.subset, SplitSpec(proportion, agent_cfg.seed))

    out = Path(args.out)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config_mod.dump_config(cfg), encoding="utf-8")
    save_layout(layout, out / "layout.json")
    dump_language(train_instr, out / "language_train.jsonl")
    dump_language(test_instr, out / "language_test.jsonl")

    every = int(cfg["train.checkpoint_every"])
    stop_at = cfg["train.stop_at"]
    log = open(out / "train_log.jsonl", "w", encoding="utf-8")
    timing = open(out / "timing.jsonl", "w", encoding="utf-8")

    def on_epoch(state, rec):
        # wall-clock time lives in its own file so the log stays reproducible
        timing.write(json.dumps({"epoch": rec["epoch"], "wall_time": rec["wall_time"]}) + "\n")
        _write_json_line(log, {k: v for k, v in rec.items() if k != "wall_time"})
        log.flush()
        if every > 0 and rec["epoch"] % every == 0:
            save_checkpoint(state.online, out / "checkpoints" / f"epoch_{rec['epoch']:05d}.ckpt")
        if not args.quiet:
            print(f"epoch {rec['epoch']:4d}  success {rec['train_success_rate']:.3f}  "
                  f"return {rec['mean_return']:8.3f}  eps {rec['epsilon']:.3f}", file=sys.stderr)

    try:
        state, curve = train(train_instr, agent_cfg, int(cfg["train.epochs"]), layout,
                             stop_at=None if stop_at is None else float(stop_at),
                             callback=on_epoch)
    finally:
        log.close()
        timing.close()
    save_checkpoint(state.online, out / "checkpoints" / "final.ckpt")
    if agent_cfg.replay == "prioritized":
        save_priority_state(state.replay, out / "replay_priorities.npz")
    record = cell_record(spec, GreedyPolicy(state.net, state.online), proportion, agent_cfg.seed,
                         train_instr, test_instr if args.test else None,
                         agent_cfg.max_steps_per_subgoal)
    with open(out / "results.jsonl", "w", encoding="utf-8") as fh:
        _write_json_line(fh, record)
    print(json.dumps(record))
    return 0


def cmd_eval(args) -> int:
    if args.policy == "oracle":
        cfg = _resolve_config(args)
        layout = config_mod.build_layout(cfg)
        subset = LanguageSubset.parse(cfg["language.subset"])
        instructions = enumerate_instructions(subset, args.min, args.max)
        spec = _spec(cfg, layout)
        record = cell_record(spec, OraclePolicy(), 1.0, int(cfg["seed"]), instructions, None,
                             int(cfg["env.max_steps_per_subgoal"]))
        print(json.dumps({"policy": "oracle", "n": record["n_train"],
                          "success": record["train_success"]}))
        return 0
    if not args.run:
        raise UsageError("eval with the greedy policy needs --run")
    run = Path(args.run)
    cfg, layout, agent_cfg, params = _load_run(run, args.checkpoint)
    spec = _spec(cfg, layout)
    train_instr = load_language(run / "language_train.jsonl")
    test_instr = load_language(run / "language_test.jsonl")
    policy = GreedyPolicy(QNetwork(agent_cfg.network), params)
    record = cell_record(spec, policy, float(cfg["language.proportion"]), agent_cfg.seed,
                         train_instr, test_instr, agent_cfg.max_steps_per_subgoal)
    print(json.dumps(record))
    return 0


def cmd_render(args) -> int:
    instr = parse(args.instruction)
    if not validate(instr):
        raise UsageError(f"not a valid instruction: {args.instruction!r}")
    if args.run:
        cfg, layout, agent_cfg, params = _load_run(Path(args.run), args.checkpoint)
        msps = agent_cfg.max_steps_per_subgoal
    else:
        cfg = _resolve_config(args)
        layout = config_mod.build_layout(cfg)
        msps = int(cfg["env.max_steps_per_subgoal"])
    env = GridWorld(layout, RewardConfig(shaping=False), record_trace=True)
    state, frames = env.reset(resolve_plan(instr), msps * instr.n_subgoals)
    print(instr.text + "  ->  " + ", ".join(r.word for r in resolve_plan(instr)))
    print(render_ascii(layout, state))
    if args.policy == "greedy":
        if not args.run:
            raise UsageError("render with the greedy policy needs --run")
        net = QNetwork(agent_cfg.network)
        encoded = net.encode(params, [instr.token_ids()])
        act = lambda: int(net.q_values(params, env.frames, instr.token_ids(), encoded).argmax())
    elif args.policy == "oracle":
        oracle = OraclePolicy()
        act = lambda: oracle.act(layout, env.state)
    else:
        return 0
    while not env.state.done:
        env.step(act())
        if args.frames:
            print()
            print(render_ascii(layout, env.state))
    print(f"\n{env.state.status.value} after {env.state.steps} steps")
    if args.trace:
        write_trace(env.trace, args.trace)
    return 0


def cmd_inspect_replay(args) -> int:
    text, consistent = priority_report(args.path, bins=args.bins)
    print(text)
    if not consistent:
        print("error: stored sum-tree disagrees with its leaves", file=sys.stderr)
        return 1
    return 0


def cmd_gradcheck(args) -> int:
    rows = run_all(tol=args.tol, seed=args.seed or 0,
                   full_size_coords=None if args.small_only else args.coords)
    failed = 0
    for label, name, err, ok in rows:
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {label:<24} {name:<10} {err:.3e}")
    print(f"{len(rows) - failed}/{len(rows)} checks within {args.tol:g}")
    return 0 if failed == 0 else 1


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    layout = config_mod.build_layout(cfg)
    agent_cfg = config_mod.build_agent_config(cfg, layout)
    spec = _spec(cfg, layout)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config_mod.dump_config(cfg), encoding="utf-8")
    save_layout(layout, out / "layout.json")
    name = f"{spec.subset.value}_{spec.fusion.value}_{spec.replay}.jsonl"
    records = run_experiment(spec, agent_cfg, out / name, int(cfg["experiment.workers"]))
    print(format_table(records, "train"))
    print()
    print(format_table(records, "test"))
    return 0


def cmd_report(args) -> int:
    records = []
    for path in args.results:
        records.extend(load_results(path))
    if not records:
        raise UsageError("no result records found")
    print(format_table(records, "train"))
    print()
    print(format_table(records, "test"))
    return 0


# ------------------------------------------------------------------ parser

def _add_run_options(p, with_training=True) -> None:
    p.add_argument("--config", help="config file with key = value lines")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int, help="seed for splits, initialization and exploration")
    p.add_argument("--subset", choices=[s.value for s in LanguageSubset])
    if with_training:
        p.add_argument("--proportion", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--fusion", choices=["ga", "cat"])
        p.add_argument("--replay", choices=["uniform", "prioritized"])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ordergrid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-lang", help="enumerate a language subset as JSON lines")
    p.add_argument("--subset", required=True, choices=[s.value for s in LanguageSubset])
    p.add_argument("--min", type=int, default=1)
    p.add_argument("--max", type=int, default=6)
    p.add_argument("--out", help="write to this file instead of stdout")
    p.set_defaults(func=cmd_gen_lang)

    p = sub.add_parser("train", help="train one agent and write a run directory")
    _add_run_options(p)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--test", action="store_true", help="also score the held-out split")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a trained run or the scripted oracle")
    _add_run_options(p, with_training=False)
    p.add_argument("--run", help="run directory written by train")
    p.add_argument("--checkpoint", help="checkpoint to load instead of the final one")
    p.add_argument("--policy", choices=["greedy", "oracle"], default="greedy")
    p.add_argument("--min", type=int, default=1)
    p.add_argument("--max", type=int, default=6)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="draw the grid and optionally play an episode")
    _add_run_options(p, with_training=False)
    p.add_argument("instruction")
    p.add_argument("--run")
    p.add_argument("--checkpoint")
    p.add_argument("--policy", choices=["none", "greedy", "oracle"], default="none")
    p.add_argument("--frames", action="store_true", help="draw every step")
    p.add_argument("--trace", help="write the step trace as JSON lines")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("inspect-replay", help="summarize a saved priority state")
    p.add_argument("path")
    p.add_argument("--bins", type=int, default=10)
    p.set_defaults(func=cmd_inspect_replay)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coords", type=int, default=12,
                   help="coordinates probed per tensor on the default-size network")
    p.add_argument("--small-only", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="run the proportion sweep for one method")
    _add_run_options(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="print result tables from result files")
    p.add_argument("results", nargs="+")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # noqa: BLE001 - last-resort boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if os.environ.get("ORDERGRID_DEBUG"):
            raise
        return 2


if __name__ == "__main__":
    sys.exit(main())
