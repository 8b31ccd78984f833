"""Experience replay: a uniform ring buffer and proportional prioritized replay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ReplayError(RuntimeError):
    pass


class EmptyBuffer(ReplayError):
    pass


class IndexOutOfRange(ReplayError, IndexError):
    pass


@dataclass(frozen=True)
class PERConfig:
    alpha: float = 0.6
    beta_start: float = 0.4
    beta_end: float = 1.0
    epsilon_priority: float = 1e-3
    capacity: int = 2 ** 17

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not (0 < self.beta_start <= 1 and 0 < self.beta_end <= 1):
            raise ValueError("beta must lie in (0, 1]")
        if self.epsilon_priority <= 0:
            raise ValueError("epsilon_priority must be > 0")

    def beta(self, fraction: float) -> float:
        """Linearly annealed IS exponent at ``fraction`` of training."""
        f = min(max(fraction, 0.0), 1.0)
        return self.beta_start + f * (self.beta_end - self.beta_start)


class SumTree:
    """Binary tree of priority sums over a power-of-two number of leaves.

    Node 1 is the root, node ``i`` has children ``2i`` and ``2i + 1`` and
    leaf ``k`` lives at node ``capacity + k``.
    """

    def __init__(self, capacity: int):
        if capacity < 1 or capacity & (capacity - 1):
            raise ValueError(f"capacity must be a power of two, got {capacity}")
        self.capacity = capacity
        self.nodes = np.zeros(2 * capacity, dtype=np.float64)

    @property
    def total(self) -> float:
        return float(self.nodes[1])

    @property
    def leaves(self) -> np.ndarray:
        return self.nodes[self.capacity:]

    def __getitem__(self, leaf: int) -> float:
        return float(self.nodes[self.capacity + leaf])

    def update(self, leaf: int, value: float) -> None:
        if not 0 <= leaf < self.capacity:
            raise IndexOutOfRange(f"leaf {leaf} outside [0, {self.capacity})")
        if value < 0:
            raise ValueError("priorities must be non-negative")
        i = self.capacity + leaf
        self.nodes[i] = value
        i //= 2
        while i >= 1:
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1]
            i //= 2

    def find_prefix(self, mass: float) -> int:
        """Smallest leaf whose cumulative sum exceeds ``mass``."""
        i = 1
        nodes = self.nodes
        while i < self.capacity:
            left = nodes[2 * i]
            # rounding can leave mass >= total; never descend into an empty subtree
            if mass < left or nodes[2 * i + 1] == 0.0:
                i = 2 * i
            else:
                mass -= left
                i = 2 * i + 1
        return i - self.capacity

    def check(self, rtol: float = 1e-9) -> bool:
        """Every internal node equals the sum of its children."""
        internal = self.nodes[1:self.capacity]
        children = self.nodes[2:2 * self.capacity:2] + self.nodes[3:2 * self.capacity:2]
        return bool(np.allclose(internal, children, rtol=rtol, atol=0.0)) and \
            bool(np.isclose(self.total, self.leaves.sum(), rtol=rtol, atol=1e-300))


def _next_pow2(n: int) -> int:
    return 1 << max(n - 1, 0).bit_length()


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions sampled uniformly.

    Transitions are stored column-wise: stacked frames as ``uint8``,
    token ids padded into an int array with their lengths alongside.
    """

    def __init__(self, capacity: int, max_tokens: int = 32):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.max_tokens = max_tokens
        self.size = 0
        self.cursor = 0
        self._store = None

    def __len__(self) -> int:
        return self.size

    def _allocate(self, frames: np.ndarray) -> None:
        c = self.capacity
        self._store = {
            "frames": np.zeros((c,) + frames.shape, dtype=np.uint8),
            "next_frames": np.zeros((c,) + frames.shape, dtype=np.uint8),
            "tokens": np.zeros((c, self.max_tokens), dtype=np.int64),
            "lengths": np.zeros(c, dtype=np.int64),
            "action": np.zeros(c, dtype=np.int64),
            "reward": np.zeros(c, dtype=np.float64),
            "done": np.zeros(c, dtype=np.float64),
        }

    def push(self, frames, tokens, action, reward, next_frames, done) -> int:
        if self._store is None:
            self._allocate(np.asarray(frames))
        if len(tokens) > self.max_tokens:
            raise ReplayError(f"instruction has {len(tokens)} tokens > {self.max_tokens}")
        i = self.cursor
        s = self._store
        s["frames"][i] = frames
        s["next_frames"][i] = next_frames
        s["tokens"][i] = 0
        s["tokens"][i, :len(tokens)] = tokens
        s["lengths"][i] = len(tokens)
        s["action"][i] = action
        s["reward"][i] = reward
        s["done"][i] = float(done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def gather(self, indices: np.ndarray) -> dict:
        indices = np.asarray(indices, dtype=np.int64)
        if self.size == 0:
            raise EmptyBuffer("replay buffer is empty")
        if np.any(indices < 0) or np.any(indices >= self.size):
            raise IndexOutOfRange("sample index out of range")
        batch = {k: v[indices] for k, v in self._store.items()}
        width = max(int(batch["lengths"].max()), 1)
        batch["tokens"] = batch["tokens"][:, :width]
        return batch

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise EmptyBuffer("replay buffer is empty")
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator, beta: float = 1.0):
        """Return ``(indices, batch, weights)``; weights are all one here."""
        idx = self.sample_indices(batch_size, rng)
        return idx, self.gather(idx), np.ones(batch_size)

    def sample_uniform(self, batch_size: int, rng: np.random.Generator) -> dict:
        return self.gather(self.sample_indices(batch_size, rng))

    def update_priorities(self, indices, td_errors) -> None:
        pass


class PrioritizedReplayBuffer(ReplayBuffer):
    """Proportional prioritized replay with stratified sum-tree sampling.

    A transition's stored priority is ``|td_error| + epsilon``; it is drawn
    with probability proportional to that priority raised to ``alpha``.
    """

    def __init__(self, capacity: int, config: PERConfig | None = None, max_tokens: int = 32):
        super().__init__(capacity, max_tokens)
        self.config = config or PERConfig(capacity=capacity)
        self.tree = SumTree(_next_pow2(capacity))
        self.priorities = np.zeros(capacity, dtype=np.float64)

    def push(self, frames, tokens, action, reward, next_frames, done) -> int:
        p = float(self.priorities[:self.size].max()) if self.size else 1.0
        i = super().push(frames, tokens, action, reward, next_frames, done)
        self._set(i, p)
        return i

    def _set(self, i: int, p: float) -> None:
        self.priorities[i] = p
        self.tree.update(i, p ** self.config.alpha)

    def probabilities(self) -> np.ndarray:
        leaves = self.tree.leaves[:self.size]
        return leaves / leaves.sum()

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise EmptyBuffer("replay buffer is empty")
        total = self.tree.total
        edges = np.arange(batch_size, dtype=np.float64) * (total / batch_size)
        masses = edges + rng.random(batch_size) * (total / batch_size)
        idx = np.empty(batch_size, dtype=np.int64)
        for k, m in enumerate(masses):
            # float drift between tree sums can push a query past the last live leaf
            idx[k] = min(self.tree.find_prefix(min(m, total)), self.size - 1)
        return idx

    def weights(self, indices: np.ndarray, beta: float) -> np.ndarray:
        """Importance weights ``(N P_i)^-beta`` scaled so the largest in the batch is 1."""
        probs = self.tree.leaves[np.asarray(indices, dtype=np.int64)] / self.tree.total
        w = (self.size * probs) ** (-beta)
        return w / w.max()

    def sample(self, batch_size: int, rng: np.random.Generator, beta: float = 1.0):
        idx = self.sample_indices(batch_size, rng)
        return idx, self.gather(idx), self.weights(idx, beta)

    def sample_prioritized(self, batch_size: int, rng: np.random.Generator, beta: float):
        return self.sample(batch_size, rng, beta)

    def update_priorities(self, indices, td_errors) -> None:
        indices = np.asarray(indices, dtype=np.int64)
        td_errors = np.asarray(td_errors, dtype=np.float64)
        if np.any(indices < 0) or np.any(indices >= self.size):
            raise IndexOutOfRange("priority update index out of range")
        for i, delta in zip(indices, td_errors):
            self._set(int(i), abs(float(delta)) + self.config.epsilon_priority)

    def state_dict(self) -> dict:
        return {"tree": self.tree.nodes.copy(), "priorities": self.priorities[:self.size].copy(),
                "size": self.size, "cursor": self.cursor, "alpha": self.config.alpha}


def save_priority_state(buffer: PrioritizedReplayBuffer, path) -> None:
    state = buffer.state_dict()
    np.savez(path, **state)


def priority_report(path, bins: int = 10) -> tuple[str, bool]:
    """Text report for a saved priority state: histogram and tree check."""
    with np.load(path) as data:
        nodes = data["tree"]
        pri = data["priorities"]
        size = int(data["size"])
        alpha = float(data["alpha"])
    tree = SumTree(len(nodes) // 2)
    tree.nodes[:] = nodes
    ok = tree.check()
    leaves_ok = bool(np.allclose(tree.leaves[:size], pri ** alpha, rtol=1e-12, atol=0.0))
    lines = [f"transitions: {size}", f"alpha: {alpha}", f"total priority mass: {tree.total:.6g}"]
    if size:
        counts, edges = np.histogram(pri, bins=bins)
        lines.append(f"priority range: [{pri.min():.6g}, {pri.max():.6g}]")
        width = max(counts.max(), 1)
        for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
            bar = "#" * int(round(40 * c / width))
            lines.append(f"  [{lo:10.4g}, {hi:10.4g})  {c:8d}  {bar}")
    consistent = ok and leaves_ok
    lines.append(f"tree consistency: {'ok' if consistent else 'FAILED'}")
    return "\n".join(lines), consistent
