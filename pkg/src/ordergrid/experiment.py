"""Evaluation protocol: proportion sweeps, success rates and result tables.

For each language subset the 1-3 sub-goal instructions are sampled at a
training proportion, a fresh agent is trained on the sample, and its
greedy success rate is measured on that sample. The runs with the largest
proportion are also evaluated on the held-out 4-6 sub-goal instructions.
Subsets with a non-linear connector additionally report the success rate
restricted to their comma-only instructions.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import jsonschema
import numpy as np

from .agent import AgentConfig, greedy_statuses, train
from .config import with_method
from .env import (Action, GridLayout, GridWorld, RewardConfig, Status, bfs_path,
                  default_layout)
from .language import (Instruction, LanguageSubset, SplitSpec, resolve_plan,
                       split_train_test)
from .qnet import Fusion, QNetwork


class ExperimentError(RuntimeError):
    pass


class EmptyInstructionSet(ExperimentError, ValueError):
    pass


class SchemaMismatch(ExperimentError, ValueError):
    pass


# ----------------------------------------------------------------- policies

class ScriptedPolicy:
    """Base for policies that pick one action per step from the env state."""

    def act(self, layout: GridLayout, state) -> Action:
        raise NotImplementedError

    def statuses(self, instructions, layout, max_steps_per_subgoal=30) -> list[Status]:
        out = []
        for instr in instructions:
            env = GridWorld(layout, RewardConfig(shaping=False))
            state, _ = env.reset(resolve_plan(instr), max_steps_per_subgoal * instr.n_subgoals)
            while not state.done:
                state, _, _, _ = env.step(self.act(layout, state))
            out.append(state.status)
        return out


class ConstantPolicy(ScriptedPolicy):
    def __init__(self, action: Action = Action.DOWN):
        self.action = Action(action)

    def act(self, layout, state):
        return self.action


class OraclePolicy(ScriptedPolicy):
    """Shortest path to the current sub-goal that steps around every other object."""

    def act(self, layout, state):
        goal = layout.objects[state.goal]
        others = [c for r, c in layout.objects.items() if r != state.goal]
        return bfs_path(layout, state.agent, goal, blocked=others)[0]


@dataclass
class GreedyPolicy:
    net: QNetwork
    params: dict

    def statuses(self, instructions, layout, max_steps_per_subgoal=30) -> list[Status]:
        return greedy_statuses(self.net, self.params, instructions, layout, max_steps_per_subgoal)


def evaluate_success_rate(policy, instructions: Sequence[Instruction], layout: GridLayout,
                          max_steps_per_subgoal: int = 30) -> float:
    """Fraction of instructions whose episode ends in success."""
    if not instructions:
        raise EmptyInstructionSet("no instructions to evaluate")
    statuses = policy.statuses(list(instructions), layout, max_steps_per_subgoal)
    return sum(s is Status.SUCCESS for s in statuses) / len(statuses)


# ---------------------------------------------------------------- protocol

DEFAULT_PROPORTIONS = tuple(round(0.1 * k, 1) for k in range(1, 10))


@dataclass(frozen=True)
class ExperimentSpec:
    subset: LanguageSubset
    fusion: Fusion = Fusion.CONCATENATION
    replay: str = "uniform"
    proportions: tuple = DEFAULT_PROPORTIONS
    seeds: tuple = (0,)
    epochs: int = 100
    layout: GridLayout = field(default_factory=default_layout)

    def __post_init__(self):
        object.__setattr__(self, "fusion", Fusion.parse(self.fusion))
        if self.replay not in ("uniform", "prioritized"):
            raise ExperimentError(f"unknown replay mode {self.replay!r}")
        if not self.proportions or not self.seeds:
            raise ExperimentError("need at least one proportion and one seed")
        if self.epochs < 1:
            raise ExperimentError("epoch budget must be >= 1")

    @property
    def method(self) -> str:
        return method_label(self.fusion, self.replay)


def method_label(fusion, replay: str) -> str:
    fusion = Fusion.parse(fusion)
    name = "DDQN + " + ("GA" if fusion is Fusion.GATED_ATTENTION else "Cat")
    return name + (" + PER" if replay == "prioritized" else "")


RESULT_FIELDS = ("subset", "method", "fusion", "replay", "proportion", "seed", "epochs",
                 "n_train", "train_success", "comma_n_train", "comma_train_success",
                 "n_test", "test_success", "comma_n_test", "comma_test_success")


def run_cell(spec: ExperimentSpec, base: AgentConfig, proportion: float, seed: int,
             evaluate_test: bool) -> dict:
    train_instr, test_instr = split_train_test(spec.subset, SplitSpec(proportion, seed))
    cfg = with_method(base, fusion=spec.fusion, replay=spec.replay, seed=seed)
    state, _ = train(train_instr, cfg, spec.epochs, spec.layout)
    return cell_record(spec, GreedyPolicy(state.net, state.online), proportion, seed,
                       train_instr, test_instr if evaluate_test else None,
                       cfg.max_steps_per_subgoal)


def cell_record(spec: ExperimentSpec, policy, proportion: float, seed: int,
                train_instr, test_instr=None, max_steps_per_subgoal: int = 30) -> dict:
    """Score ``policy`` on one cell's splits; pass ``test_instr=None`` to skip testing."""

    def rate(instrs):
        if not instrs:
            return None
        return evaluate_success_rate(policy, instrs, spec.layout, max_steps_per_subgoal)

    def comma(instrs):
        return [i for i in instrs if i.comma_only]

    with_comma = spec.subset is not LanguageSubset.COMMA
    tested = test_instr is not None
    return {
        "subset": spec.subset.value,
        "method": spec.method,
        "fusion": spec.fusion.value,
        "replay": spec.replay,
        "proportion": proportion,
        "seed": seed,
        "epochs": spec.epochs,
        "n_train": len(train_instr),
        "train_success": rate(train_instr),
        "comma_n_train": len(comma(train_instr)) if with_comma else None,
        "comma_train_success": rate(comma(train_instr)) if with_comma else None,
        "n_test": len(test_instr) if tested else None,
        "test_success": rate(test_instr) if tested else None,
        "comma_n_test": len(comma(test_instr)) if tested and with_comma else None,
        "comma_test_success": rate(comma(test_instr)) if tested and with_comma else None,
    }


def _run_cell_args(args):
    return run_cell(*args)


def run_experiment(spec: ExperimentSpec, base: AgentConfig | None = None, out_path=None,
                   workers: int = 1) -> list[dict]:
    """Run every (proportion, seed) cell and return one record per cell.

    Only cells at the largest proportion are evaluated on the test split.
    Finished cells are appended to ``out_path`` as they complete.
    """
    base = base or AgentConfig()
    top = max(spec.proportions)
    jobs = [(spec, base, p, s, p == top) for p in spec.proportions for s in spec.seeds]
    records = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_run_cell_args, jobs):
                records.append(rec)
                if out_path is not None:
                    append_results([rec], out_path)
    else:
        for job in jobs:
            rec = run_cell(*job)
            records.append(rec)
            if out_path is not None:
                append_results([rec], out_path)
    return records


# ------------------------------------------------------------- persistence

def result_schema() -> dict:
    text = resources.files("ordergrid").joinpath("result.schema.json").read_text("utf-8")
    return json.loads(text)


def validate_record(record: dict, schema: dict | None = None) -> None:
    try:
        jsonschema.validate(record, schema or result_schema())
    except jsonschema.ValidationError as exc:
        raise SchemaMismatch(exc.message) from exc


def append_results(records, path) -> None:
    schema = result_schema()
    with open(path, "a", encoding="utf-8") as fh:
        for rec in records:
            validate_record(rec, schema)
            fh.write(json.dumps({k: rec[k] for k in RESULT_FIELDS}) + "\n")


def persist_results(records, path) -> None:
    open(path, "w").close()
    append_results(records, path)


def load_results(path) -> list[dict]:
    schema = result_schema()
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            validate_record(rec, schema)
            out.append(rec)
    return out


# ----------------------------------------------------------------- reports

METHOD_ORDER = ("DDQN + Cat", "DDQN + GA", "DDQN + Cat + PER", "DDQN + GA + PER")


def summarize(records) -> dict:
    """Table values keyed by ``(subset, method)``.

    Train scores average over proportions (and seeds); test scores average
    over the seeds of the largest-proportion runs.
    """
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec["subset"], rec["method"]), []).append(rec)

    def mean(recs, key):
        vals = [r[key] for r in recs if r.get(key) is not None]
        return float(np.mean(vals)) if vals else None

    out = {}
    for key, recs in groups.items():
        out[key] = {
            "train": mean(recs, "train_success"),
            "comma_train": mean(recs, "comma_train_success"),
            "test": mean(recs, "test_success"),
            "comma_test": mean(recs, "comma_test_success"),
        }
    return out


def _fmt(v) -> str:
    return "-" if v is None else f"{100 * v:.1f}%"


def format_table(records, which: str = "train") -> str:
    """Aligned text table: subsets as rows, methods as columns.

    Non-comma subsets get a second row in parentheses with the score on
    their comma-only instructions.
    """
    summary = summarize(records)
    methods = [m for m in METHOD_ORDER if any(k[1] == m for k in summary)]
    methods += sorted({k[1] for k in summary} - set(methods))
    title = {"train": "Success rate at training instructions (mean over proportions)",
             "test": "Success rate at testing instructions (largest proportion)"}[which]
    rows = [["Language Subset"] + methods]
    for subset in LanguageSubset:
        if not any(k[0] == subset.value for k in summary):
            continue
        cells = [summary.get((subset.value, m), {}) for m in methods]
        rows.append([subset.title] + [_fmt(c.get(which)) for c in cells])
        if subset is not LanguageSubset.COMMA:
            rows.append([""] + [f"({_fmt(c.get('comma_' + which))})" for c in cells])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = [title]
    for k, row in enumerate(rows):
        lines.append(" | ".join(cell.ljust(w) for cell, w in zip(row, widths)))
        if k == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines)


__all__ = [
    "ExperimentSpec", "OraclePolicy", "ConstantPolicy", "GreedyPolicy", "ScriptedPolicy",
    "evaluate_success_rate", "run_cell", "run_experiment", "persist_results", "load_results",
    "append_results", "summarize", "format_table", "method_label", "SchemaMismatch",
    "EmptyInstructionSet", "cell_record", "result_schema", "validate_record",
]
