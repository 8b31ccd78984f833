"""Instruction language built from "go to the <color>" clauses and order connectors.

Instructions join one to six sub-goals with connectors. ``comma`` keeps the
surface order; ``but first`` moves the last sub-goal to the front and
``but before`` puts it right before the second-to-last one. A non-linear
connector may only appear once, as the final connector, and no instruction
may resolve to visiting the same object twice in a row.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class LanguageError(ValueError):
    pass


class UnknownToken(LanguageError):
    pass


class MalformedClause(LanguageError):
    pass


class EmptyTrain(LanguageError):
    pass


class Referent(enum.IntEnum):
    RED = 0
    BLUE = 1
    GREEN = 2

    @property
    def word(self) -> str:
        return self.name.lower()

    @classmethod
    def from_word(cls, word: str) -> "Referent":
        return cls[word.upper()]


class Connector(enum.IntEnum):
    COMMA = 0
    BUT_FIRST = 1
    BUT_BEFORE = 2

    @property
    def linear(self) -> bool:
        return self is Connector.COMMA

    @property
    def label(self) -> str:
        return ("comma", "but_first", "but_before")[self]


_JOINERS = {
    Connector.COMMA: ", ",
    Connector.BUT_FIRST: ", but first ",
    Connector.BUT_BEFORE: ", but before ",
}

VOCABULARY = ("go", "to", "the", "red", "blue", "green", ",", "but", "first", "before")
TOKEN_IDS = {w: i for i, w in enumerate(VOCABULARY)}

MAX_SUBGOALS = 6
TRAIN_MAX_SUBGOALS = 3


class LanguageSubset(enum.Enum):
    COMMA = "comma"
    COMMA_BUT_FIRST = "comma-butfirst"
    COMMA_BUT_BEFORE = "comma-butbefore"

    @property
    def allowed_connectors(self) -> frozenset[Connector]:
        extra = {
            LanguageSubset.COMMA: set(),
            LanguageSubset.COMMA_BUT_FIRST: {Connector.BUT_FIRST},
            LanguageSubset.COMMA_BUT_BEFORE: {Connector.BUT_BEFORE},
        }[self]
        return frozenset({Connector.COMMA} | extra)

    @property
    def title(self) -> str:
        return {"comma": "Comma", "comma-butfirst": "Comma-ButFirst",
                "comma-butbefore": "Comma-ButBefore"}[self.value]

    @classmethod
    def parse(cls, name: str) -> "LanguageSubset":
        key = name.strip().lower().replace("_", "-")
        aliases = {"butfirst": "comma-butfirst", "butbefore": "comma-butbefore"}
        key = aliases.get(key, key)
        for subset in cls:
            if subset.value == key:
                return subset
        raise LanguageError(f"unknown language subset {name!r}")


@dataclass(frozen=True)
class Instruction:
    subgoals: tuple[Referent, ...]
    connectors: tuple[Connector, ...]

    def __post_init__(self):
        if len(self.connectors) != max(len(self.subgoals) - 1, 0):
            raise LanguageError("need exactly one connector between consecutive sub-goals")

    @classmethod
    def of(cls, subgoals: Iterable, connectors: Iterable = ()) -> "Instruction":
        """Build from referent/connector enums, names, or ints."""
        return cls(tuple(_as_referent(s) for s in subgoals),
                   tuple(_as_connector(c) for c in connectors))

    @property
    def n_subgoals(self) -> int:
        return len(self.subgoals)

    @property
    def text(self) -> str:
        return render(self)

    @property
    def comma_only(self) -> bool:
        return all(c is Connector.COMMA for c in self.connectors)

    def token_ids(self) -> list[int]:
        return [TOKEN_IDS[t] for t in tokenize(self.text)]


def _as_referent(value) -> Referent:
    if isinstance(value, Referent):
        return value
    if isinstance(value, str):
        return Referent.from_word(value)
    return Referent(int(value))


def _as_connector(value) -> Connector:
    if isinstance(value, Connector):
        return value
    if isinstance(value, str):
        return Connector[value.upper().replace(" ", "_")]
    return Connector(int(value))


def render(instr: Instruction) -> str:
    clauses = [f"go to the {r.word}" for r in instr.subgoals]
    if not clauses:
        return ""
    out = clauses[0]
    for conn, clause in zip(instr.connectors, clauses[1:]):
        out += _JOINERS[conn] + clause
    return out[0].upper() + out[1:]


def tokenize(text: str) -> list[str]:
    """Split canonical instruction text into lowercase tokens.

    Commas become tokens of their own. Raises :class:`UnknownToken` for
    words outside the vocabulary and :class:`MalformedClause` when the
    token stream does not parse as clauses joined by connectors.
    """
    tokens = text.lower().replace(",", " , ").split()
    for tok in tokens:
        if tok not in TOKEN_IDS:
            raise UnknownToken(f"unknown token {tok!r}")
    parse_tokens(tokens)
    return tokens


def parse_tokens(tokens: Sequence[str]) -> Instruction:
    subgoals: list[Referent] = []
    connectors: list[Connector] = []
    i = 0
    while True:
        clause = list(tokens[i:i + 4])
        if len(clause) < 4 or clause[:3] != ["go", "to", "the"] \
                or clause[3] not in ("red", "blue", "green"):
            raise MalformedClause(f"expected 'go to the <color>' at token {i}: {clause}")
        subgoals.append(Referent.from_word(clause[3]))
        i += 4
        if i == len(tokens):
            break
        if tokens[i] != ",":
            raise MalformedClause(f"expected ',' at token {i}, got {tokens[i]!r}")
        i += 1
        if i < len(tokens) and tokens[i] == "but":
            word = tokens[i + 1] if i + 1 < len(tokens) else None
            if word == "first":
                connectors.append(Connector.BUT_FIRST)
            elif word == "before":
                connectors.append(Connector.BUT_BEFORE)
            else:
                raise MalformedClause(f"'but' must be followed by 'first' or 'before', got {word!r}")
            i += 2
        else:
            connectors.append(Connector.COMMA)
    return Instruction(tuple(subgoals), tuple(connectors))


def parse(text: str) -> Instruction:
    return parse_tokens(tokenize(text))


def structurally_valid(connectors: Sequence[Connector]) -> bool:
    # start -> comma* -> at most one trailing but-first / but-before
    for k, conn in enumerate(connectors):
        if not conn.linear and k != len(connectors) - 1:
            return False
    return True


def resolve_plan(instr: Instruction) -> tuple[Referent, ...]:
    order = list(instr.subgoals)
    if not instr.connectors:
        return tuple(order)
    last = instr.connectors[-1]
    if last is Connector.BUT_FIRST:
        order = [order[-1]] + order[:-1]
    elif last is Connector.BUT_BEFORE:
        order[-2], order[-1] = order[-1], order[-2]
    return tuple(order)


def validate(instr: Instruction) -> bool:
    if not 1 <= instr.n_subgoals <= MAX_SUBGOALS:
        return False
    if not structurally_valid(instr.connectors):
        return False
    plan = resolve_plan(instr)
    return all(a != b for a, b in zip(plan, plan[1:]))


def subset_membership(instr: Instruction) -> set[LanguageSubset]:
    used = set(instr.connectors)
    return {s for s in LanguageSubset if used <= s.allowed_connectors}


def _connector_profiles(n: int, subset: LanguageSubset) -> list[tuple[Connector, ...]]:
    if n == 1:
        return [()]
    profiles = [(Connector.COMMA,) * (n - 1)]
    for conn in sorted(subset.allowed_connectors - {Connector.COMMA}):
        profiles.append((Connector.COMMA,) * (n - 2) + (conn,))
    return profiles


def enumerate_instructions(subset: LanguageSubset, min_subgoals: int = 1,
                           max_subgoals: int = MAX_SUBGOALS) -> list[Instruction]:
    """All valid instructions of ``subset`` with a sub-goal count in range.

    Ordered by sub-goal count, then referent tuple (red < blue < green),
    then connector profile with the comma-only profile first.
    """
    if not 1 <= min_subgoals <= max_subgoals <= MAX_SUBGOALS:
        raise LanguageError(f"need 1 <= min <= max <= {MAX_SUBGOALS}")
    out = []
    for n in range(min_subgoals, max_subgoals + 1):
        profiles = _connector_profiles(n, subset)
        for subgoals in itertools.product(Referent, repeat=n):
            for conns in profiles:
                instr = Instruction(subgoals, conns)
                if validate(instr):
                    out.append(instr)
    return out


@dataclass(frozen=True)
class SplitSpec:
    proportion: float
    seed: int = 0
    train_max_subgoals: int = TRAIN_MAX_SUBGOALS
    total_max_subgoals: int = MAX_SUBGOALS


def train_count(proportion: float, pool_size: int) -> int:
    # round half up; the epsilon absorbs binary noise such as 0.5 * 39 = 19.499999
    return int(math.floor(proportion * pool_size + 0.5 + 1e-9))


def split_train_test(subset: LanguageSubset, spec: SplitSpec):
    if not 0.0 < spec.proportion <= 1.0:
        raise LanguageError(f"proportion must lie in (0, 1], got {spec.proportion}")
    pool = enumerate_instructions(subset, 1, spec.train_max_subgoals)
    test = enumerate_instructions(subset, spec.train_max_subgoals + 1, spec.total_max_subgoals)
    k = train_count(spec.proportion, len(pool))
    if k == 0:
        raise EmptyTrain(f"proportion {spec.proportion} of {len(pool)} instructions rounds to 0")
    # proportions draw independent (not nested) samples
    rng = np.random.default_rng([spec.seed, int(round(spec.proportion * 1000))])
    chosen = np.sort(rng.choice(len(pool), size=k, replace=False))
    return [pool[i] for i in chosen], test


def to_record(instr: Instruction) -> dict:
    return {
        "text": instr.text,
        "subgoals": [r.word for r in instr.subgoals],
        "connectors": [c.label for c in instr.connectors],
        "plan": [r.word for r in resolve_plan(instr)],
        "n_subgoals": instr.n_subgoals,
        "subsets": [s.value for s in LanguageSubset if s in subset_membership(instr)],
    }


def from_record(record: dict) -> Instruction:
    return Instruction.of(record["subgoals"], record["connectors"])


def dump_language(instructions: Iterable[Instruction], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for instr in instructions:
            fh.write(json.dumps(to_record(instr)) + "\n")
            n += 1
    return n


def load_language(path) -> list[Instruction]:
    with open(path, encoding="utf-8") as fh:
        return [from_record(json.loads(line)) for line in fh if line.strip()]
