"""Modified GridWorld: visit the referent objects in the order of a plan.

Entering the cell of the current sub-goal advances the plan; entering any
other object's cell ends the episode in failure. There are no walls and
objects do not block movement. Rewards can be shaped with the potential
``-bfs_distance(agent, current goal)``, which is zero at terminal states.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .language import Referent

Cell = tuple[int, int]


class EnvError(RuntimeError):
    pass


class InvalidLayout(EnvError):
    pass


class SteppedAfterDone(EnvError):
    pass


class Action(enum.IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


MOVES = {Action.UP: (0, 1), Action.DOWN: (0, -1), Action.LEFT: (-1, 0), Action.RIGHT: (1, 0)}
N_ACTIONS = len(Action)
FRAME_STACK = 4
# observation planes: agent, red, blue, green
N_PLANES = 1 + len(Referent)


class Status(enum.Enum):
    RUNNING = "running"
    SUCCESS = "success"
    FAILURE = "failure"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class GridLayout:
    width: int
    height: int
    agent_start: Cell
    objects: dict  # Referent -> Cell

    def __post_init__(self):
        cells = [tuple(self.agent_start)] + [tuple(self.objects[r]) for r in Referent
                                              if r in self.objects]
        if set(self.objects) != set(Referent):
            raise InvalidLayout("layout needs exactly one cell per referent")
        if len(set(cells)) != len(cells):
            raise InvalidLayout(f"layout cells must be distinct: {cells}")
        for x, y in cells:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise InvalidLayout(f"cell {(x, y)} outside {self.width}x{self.height} grid")

    def object_at(self, cell: Cell):
        for ref, pos in self.objects.items():
            if tuple(pos) == tuple(cell):
                return ref
        return None

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "agent_start": list(self.agent_start),
            "objects": {r.word: list(self.objects[r]) for r in Referent},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridLayout":
        try:
            return cls(int(d["width"]), int(d["height"]), tuple(d["agent_start"]),
                       {Referent.from_word(k): tuple(v) for k, v in d["objects"].items()})
        except (KeyError, TypeError) as exc:
            raise InvalidLayout(f"bad layout record: {exc}") from exc


def default_layout() -> GridLayout:
    """The 10x10 layout drawn in the original environment figure."""
    return GridLayout(10, 10, (1, 5), {Referent.RED: (6, 5), Referent.BLUE: (4, 9),
                                      Referent.GREEN: (3, 0)})


def random_layout(seed: int, width: int = 10, height: int = 10) -> GridLayout:
    rng = np.random.default_rng(seed)
    flat = rng.choice(width * height, size=1 + len(Referent), replace=False)
    cells = [(int(i % width), int(i // width)) for i in flat]
    return GridLayout(width, height, cells[0], dict(zip(Referent, cells[1:])))


def save_layout(layout: GridLayout, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(layout.to_dict(), fh)
        fh.write("\n")


def load_layout(path) -> GridLayout:
    with open(path, encoding="utf-8") as fh:
        return GridLayout.from_dict(json.load(fh))


@dataclass(frozen=True)
class RewardConfig:
    gamma: float = 0.99
    r_correct: float = 1.0
    r_wrong: float = -1.0
    r_step: float = 0.0
    shaping: bool = True


@dataclass(frozen=True)
class EnvState:
    agent: Cell
    plan: tuple
    progress: int = 0
    steps: int = 0
    status: Status = Status.RUNNING
    max_steps: int = 0

    @property
    def done(self) -> bool:
        return self.status is not Status.RUNNING

    @property
    def goal(self):
        return self.plan[self.progress] if self.progress < len(self.plan) else None


def default_max_steps(n_subgoals: int) -> int:
    return 30 * n_subgoals


def bfs_distance(layout: GridLayout, start: Cell, goal: Cell, blocked=()) -> int:
    """Shortest 4-connected path length; -1 when ``goal`` is unreachable."""
    start, goal = tuple(start), tuple(goal)
    if start == goal:
        return 0
    blocked = {tuple(c) for c in blocked}
    seen = {start}
    queue = deque([(start, 0)])
    while queue:
        (x, y), d = queue.popleft()
        for dx, dy in MOVES.values():
            nxt = (x + dx, y + dy)
            if nxt in seen or nxt in blocked:
                continue
            if not (0 <= nxt[0] < layout.width and 0 <= nxt[1] < layout.height):
                continue
            if nxt == goal:
                return d + 1
            seen.add(nxt)
            queue.append((nxt, d + 1))
    return -1


def bfs_path(layout: GridLayout, start: Cell, goal: Cell, blocked=()) -> list[Action]:
    """Actions of one shortest path from ``start`` to ``goal`` avoiding ``blocked``.

    Neighbours are expanded in :class:`Action` order, so the path is
    deterministic. Raises :class:`EnvError` if no path exists.
    """
    start, goal = tuple(start), tuple(goal)
    blocked = {tuple(c) for c in blocked} - {goal}
    parent = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        if cell == goal:
            break
        for action in Action:
            dx, dy = MOVES[action]
            nxt = (cell[0] + dx, cell[1] + dy)
            if nxt in parent or nxt in blocked:
                continue
            if not (0 <= nxt[0] < layout.width and 0 <= nxt[1] < layout.height):
                continue
            parent[nxt] = (cell, action)
            queue.append(nxt)
    if goal not in parent:
        raise EnvError(f"no path from {start} to {goal}")
    actions = []
    cell = goal
    while parent[cell] is not None:
        cell, action = parent[cell]
        actions.append(action)
    return actions[::-1]


def potential(layout: GridLayout, state: EnvState) -> float:
    if state.done:
        return 0.0
    return -float(bfs_distance(layout, state.agent, layout.objects[state.goal]))


def truncated_potential(layout: GridLayout, state: EnvState) -> float:
    """Potential of a timed-out state as if the episode had gone on."""
    if state.status is not Status.TIMEOUT:
        return potential(layout, state)
    return -float(bfs_distance(layout, state.agent, layout.objects[state.goal]))


def shaped_reward(r_base: float, phi_s: float, phi_next: float, gamma: float) -> float:
    return r_base + gamma * phi_next - phi_s


def initial_state(layout: GridLayout, plan: Sequence, max_steps: int | None = None) -> EnvState:
    plan = tuple(Referent(r) for r in plan)
    if not plan:
        raise EnvError("plan must be non-empty")
    if tuple(layout.agent_start) == tuple(layout.objects[plan[0]]):
        raise InvalidLayout("agent starts on the first sub-goal")
    if max_steps is None:
        max_steps = default_max_steps(len(plan))
    return EnvState(tuple(layout.agent_start), plan, 0, 0, Status.RUNNING, int(max_steps))


def transition(layout: GridLayout, state: EnvState, action: Action,
               rewards: RewardConfig) -> tuple[EnvState, float]:
    """Pure dynamics: next state and base (unshaped) reward."""
    if state.done:
        raise SteppedAfterDone(f"episode already ended with {state.status.value}")
    dx, dy = MOVES[Action(action)]
    x, y = state.agent[0] + dx, state.agent[1] + dy
    if not (0 <= x < layout.width and 0 <= y < layout.height):
        x, y = state.agent
    moved = (x, y) != tuple(state.agent)
    progress, status, r = state.progress, Status.RUNNING, rewards.r_step
    hit = layout.object_at((x, y)) if moved else None
    if hit is not None:
        if hit == state.goal:
            progress += 1
            r += rewards.r_correct
            if progress == len(state.plan):
                status = Status.SUCCESS
        else:
            r += rewards.r_wrong
            status = Status.FAILURE
    steps = state.steps + 1
    if status is Status.RUNNING and state.max_steps and steps >= state.max_steps:
        status = Status.TIMEOUT
    return replace(state, agent=(x, y), progress=progress, steps=steps, status=status), r


def encode_observation(layout: GridLayout, state: EnvState) -> np.ndarray:
    obs = np.zeros((N_PLANES, layout.height, layout.width), dtype=np.uint8)
    obs[0, state.agent[1], state.agent[0]] = 1
    for ref in Referent:
        x, y = layout.objects[ref]
        obs[1 + ref, y, x] = 1
    return obs


def initial_frames(obs: np.ndarray) -> np.ndarray:
    return np.concatenate([obs] * FRAME_STACK, axis=0)


def push_frame(frames: np.ndarray, obs: np.ndarray) -> np.ndarray:
    """Drop the oldest observation and append ``obs`` as the newest."""
    k = obs.shape[0]
    return np.concatenate([frames[k:], obs], axis=0)


def render_ascii(layout: GridLayout, state: EnvState | None = None) -> str:
    agent = tuple(state.agent) if state is not None else tuple(layout.agent_start)
    rows = []
    for y in range(layout.height - 1, -1, -1):
        row = []
        for x in range(layout.width):
            ref = layout.object_at((x, y))
            if (x, y) == agent:
                row.append("A")
            elif ref is not None:
                row.append(ref.word[0].upper())
            else:
                row.append("·")
        rows.append("".join(row))
    return "\n".join(rows)


@dataclass
class GridWorld:
    """Stateful episode wrapper around :func:`transition` with frame stacking."""

    layout: GridLayout
    rewards: RewardConfig = field(default_factory=RewardConfig)
    record_trace: bool = False

    def __post_init__(self):
        self.state: EnvState | None = None
        self.frames: np.ndarray | None = None
        self.trace: list[dict] = []

    def reset(self, plan: Sequence, max_steps: int | None = None):
        self.state = initial_state(self.layout, plan, max_steps)
        self.frames = initial_frames(encode_observation(self.layout, self.state))
        self.trace = []
        return self.state, self.frames

    def step(self, action):
        if self.state is None:
            raise EnvError("reset() before step()")
        action = Action(action)
        prev = self.state
        nxt, r_base = transition(self.layout, prev, action, self.rewards)
        if self.rewards.shaping:
            r = shaped_reward(r_base, potential(self.layout, prev), potential(self.layout, nxt),
                              self.rewards.gamma)
        else:
            r = r_base
        self.state = nxt
        self.frames = push_frame(self.frames, encode_observation(self.layout, nxt))
        if self.record_trace:
            self.trace.append({"step": nxt.steps, "action": action.name.lower(),
                               "agent": list(nxt.agent), "progress": nxt.progress,
                               "r_base": r_base, "r_shaped": r, "status": nxt.status.value})
        return nxt, self.frames, r, nxt.done


def write_trace(trace: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps(rec) + "\n")


def value_iteration(layout: GridLayout, plan: Sequence, rewards: RewardConfig,
                    tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Exact Q-values of the infinite-horizon MDP (no step budget).

    States are (progress, x, y) for every non-terminal progress value.
    Returns an array of shape ``(len(plan), width, height, N_ACTIONS)``.
    Shaping is applied when ``rewards.shaping`` is set.
    """
    plan = tuple(Referent(r) for r in plan)
    n, w, h = len(plan), layout.width, layout.height
    gamma = rewards.gamma
    succ = np.zeros((n, w, h, N_ACTIONS, 3), dtype=np.int64)
    term = np.zeros((n, w, h, N_ACTIONS), dtype=bool)
    rew = np.zeros((n, w, h, N_ACTIONS))
    for p in range(n):
        for x in range(w):
            for y in range(h):
                s = EnvState((x, y), plan, p, 0, Status.RUNNING, 0)
                for a in Action:
                    s2, r = transition(layout, s, a, rewards)
                    if rewards.shaping:
                        r = shaped_reward(r, potential(layout, s), potential(layout, s2), gamma)
                    succ[p, x, y, a] = (min(s2.progress, n - 1), *s2.agent)
                    term[p, x, y, a] = s2.done
                    rew[p, x, y, a] = r
    v = np.zeros((n, w, h))
    for _ in range(max_iter):
        nv = v[succ[..., 0], succ[..., 1], succ[..., 2]]
        q = rew + gamma * np.where(term, 0.0, nv)
        new_v = q.max(axis=-1)
        if np.max(np.abs(new_v - v)) < tol:
            v = new_v
            break
        v = new_v
    nv = v[succ[..., 0], succ[..., 1], succ[..., 2]]
    return rew + gamma * np.where(term, 0.0, nv)


def greedy_action_sets(q: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """Boolean mask of actions within ``atol`` of the per-state maximum."""
    return q >= q.max(axis=-1, keepdims=True) - atol
