"""Single-actor DQN training over a fixed list of instructions.

One epoch plays one episode per training instruction in a fixed order and
copies the online parameters into the target network once the whole pass
is done, so the number of target updates does not depend on how many
instructions there are.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .env import (GridLayout, GridWorld, RewardConfig, Status, default_layout,
                  truncated_potential)
from .language import Instruction, resolve_plan
from .qnet import (Adam, NetworkConfig, OptimizerConfig, QNetwork, copy_params,
                   td_loss_and_grad)
from .replay import PERConfig, PrioritizedReplayBuffer, ReplayBuffer


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 100_000
    updates_per_episode: int | None = None  # None: one update per collected step
    batch_size: int = 32
    replay: str = "uniform"  # or "prioritized"
    replay_capacity: int = 2 ** 17
    per: PERConfig = field(default_factory=PERConfig)
    double_q: bool = True
    max_steps_per_subgoal: int = 30
    seed: int = 0
    network: NetworkConfig = field(default_factory=NetworkConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)

    def __post_init__(self):
        if self.replay not in ("uniform", "prioritized"):
            raise ValueError(f"replay must be 'uniform' or 'prioritized', got {self.replay!r}")
        if not (0.0 <= self.eps_end <= 1.0 and 0.0 <= self.eps_start <= 1.0):
            raise ValueError("epsilon values must lie in [0, 1]")
        if self.rewards.gamma != self.gamma:
            # shaping and TD targets share one discount
            object.__setattr__(self, "rewards", replace(self.rewards, gamma=self.gamma))

    def epsilon(self, env_steps: int) -> float:
        if self.eps_decay_steps <= 0 or env_steps >= self.eps_decay_steps:
            return self.eps_end
        frac = min(env_steps / self.eps_decay_steps, 1.0)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


def select_action(qvals, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; ``np.argmax`` breaks ties toward the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(len(qvals)))
    return int(np.argmax(qvals))


@dataclass
class TrainState:
    net: QNetwork
    online: dict
    target: dict
    replay: ReplayBuffer
    optimizer: Adam
    rng: np.random.Generator
    env: GridWorld
    env_steps: int = 0
    epoch: int = 0
    updates: int = 0
    beta_fraction: float = 0.0
    sync_log: list = field(default_factory=list)
    episode_stats: dict = field(default_factory=dict)


def init_state(cfg: AgentConfig, layout: GridLayout | None = None) -> TrainState:
    net = QNetwork(cfg.network)
    online = net.init(cfg.seed)
    if cfg.replay == "prioritized":
        replay = PrioritizedReplayBuffer(cfg.replay_capacity, cfg.per)
    else:
        replay = ReplayBuffer(cfg.replay_capacity)
    return TrainState(
        net=net,
        online=online,
        target=copy_params(online),
        replay=replay,
        optimizer=Adam(online, cfg.optimizer),
        rng=np.random.default_rng([cfg.seed, 1]),
        env=GridWorld(layout or default_layout(), cfg.rewards),
    )


def _max_steps(cfg: AgentConfig, instr: Instruction) -> int:
    return cfg.max_steps_per_subgoal * instr.n_subgoals


def update_step(state: TrainState, cfg: AgentConfig) -> float:
    beta = cfg.per.beta(state.beta_fraction)
    idx, batch, weights = state.replay.sample(cfg.batch_size, state.rng, beta)
    loss, td, grads = td_loss_and_grad(state.net, state.online, state.target, batch,
                                       cfg.gamma, cfg.double_q, weights)
    state.optimizer.step(state.online, grads)
    state.replay.update_priorities(idx, td)
    state.updates += 1
    return loss


def run_episode(instr: Instruction, state: TrainState, cfg: AgentConfig) -> dict:
    env = state.env
    tokens = instr.token_ids()
    # parameters only change after the episode, so encode the instruction once
    encoded = state.net.encode(state.online, [tokens])
    _, frames = env.reset(resolve_plan(instr), _max_steps(cfg, instr))
    total, done, steps = 0.0, False, 0
    while not done:
        eps = cfg.epsilon(state.env_steps)
        q = state.net.q_values(state.online, frames, tokens, encoded)
        action = select_action(q, eps, state.rng)
        env_state, next_frames, reward, done = env.step(action)
        # a timeout is a truncation, not a terminal state of the task: the
        # target bootstraps from the next state, so the shaping term must use
        # that state's real potential instead of the terminal value 0
        terminal = done and env_state.status is not Status.TIMEOUT
        if done and not terminal and cfg.rewards.shaping:
            reward += cfg.gamma * truncated_potential(env.layout, env_state)
        state.replay.push(frames, tokens, action, reward, next_frames, terminal)
        frames = next_frames
        total += reward
        steps += 1
        state.env_steps += 1
    losses = []
    if len(state.replay) >= cfg.batch_size:
        n_updates = cfg.updates_per_episode if cfg.updates_per_episode is not None else steps
        for _ in range(n_updates):
            losses.append(update_step(state, cfg))
    return {"success": env.state.status is Status.SUCCESS, "status": env.state.status.value,
            "steps": steps, "return": total,
            "loss": float(np.mean(losses)) if losses else None}


def train_epoch(instructions: Sequence[Instruction], state: TrainState, cfg: AgentConfig) -> dict:
    if not instructions:
        raise TrainingError("no training instructions")
    episodes = [run_episode(instr, state, cfg) for instr in instructions]
    state.target = copy_params(state.online)
    state.epoch += 1
    state.sync_log.append(state.epoch)
    for instr, ep in zip(instructions, episodes):
        state.episode_stats[instr.text] = ep
    return {
        "epoch": state.epoch,
        "mean_return": float(np.mean([e["return"] for e in episodes])),
        "mean_steps": float(np.mean([e["steps"] for e in episodes])),
        "explore_success_rate": float(np.mean([e["success"] for e in episodes])),
        "epsilon": cfg.epsilon(state.env_steps),
        "env_steps": state.env_steps,
        "updates": state.updates,
    }


def greedy_statuses(net: QNetwork, params: dict, instructions: Sequence[Instruction],
                    layout: GridLayout, max_steps_per_subgoal: int = 30) -> list[Status]:
    """Final status of one greedy (epsilon = 0) episode per instruction.

    Episodes run in lockstep so each step needs a single batched forward.
    """
    if not instructions:
        raise TrainingError("no instructions to evaluate")
    envs = [GridWorld(layout, RewardConfig(shaping=False)) for _ in instructions]
    frames = [env.reset(resolve_plan(i), max_steps_per_subgoal * i.n_subgoals)[1]
              for env, i in zip(envs, instructions)]
    tokens, lengths, h = net.encode(params, [i.token_ids() for i in instructions])
    active = list(range(len(envs)))
    while active:
        sel = np.array(active)
        q = net.forward(params, np.stack([frames[k] for k in active]), tokens[sel],
                        lengths[sel], instr=(h[sel], None))
        still = []
        for k, action in zip(active, np.argmax(q, axis=1)):
            _, frames[k], _, done = envs[k].step(int(action))
            if not done:
                still.append(k)
        active = still
    return [env.state.status for env in envs]


def greedy_success_rate(net: QNetwork, params: dict, instructions: Sequence[Instruction],
                        layout: GridLayout, max_steps_per_subgoal: int = 30) -> float:
    statuses = greedy_statuses(net, params, instructions, layout, max_steps_per_subgoal)
    return sum(s is Status.SUCCESS for s in statuses) / len(statuses)


def train(instructions: Sequence[Instruction], cfg: AgentConfig, budget: int,
          layout: GridLayout | None = None, stop_at: float | None = None,
          callback: Callable[[TrainState, dict], None] | None = None):
    """Train for ``budget`` epochs and return ``(state, curve)``.

    Each curve record holds the greedy success rate on ``instructions``
    measured after the epoch. With ``stop_at`` set, training ends early
    once that success rate is reached.
    """
    if budget < 1:
        raise TrainingError("epoch budget must be >= 1")
    if not instructions:
        raise TrainingError("no training instructions")
    state = init_state(cfg, layout)
    curve = []
    for e in range(budget):
        state.beta_fraction = e / budget
        t0 = time.perf_counter()
        rec = train_epoch(instructions, state, cfg)
        rec["train_success_rate"] = greedy_success_rate(
            state.net, state.online, instructions, state.env.layout, cfg.max_steps_per_subgoal)
        rec["wall_time"] = time.perf_counter() - t0
        curve.append(rec)
        if callback is not None:
            callback(state, rec)
        if stop_at is not None and rec["train_success_rate"] >= stop_at:
            break
    return state, curve
