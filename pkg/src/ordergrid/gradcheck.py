"""Central finite-difference checks of the Q-network's analytic gradients."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .qnet import Fusion, NetworkConfig, QNetwork, init_params, td_loss, td_loss_and_grad

SMALL_CONFIG = NetworkConfig(input_shape=(16, 7, 7), conv1_filters=4, conv2_filters=5,
                             embed_dim=5, instr_dim=6, hidden=8)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)`` over a whole parameter tensor."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def random_batch(config: NetworkConfig, batch_size: int, rng: np.random.Generator,
                 max_len: int = 9) -> dict:
    shape = (batch_size,) + config.input_shape
    lengths = rng.integers(1, max_len + 1, size=batch_size)
    tokens = rng.integers(0, config.vocab_size, size=(batch_size, int(lengths.max())))
    return {
        "frames": rng.random(shape),
        "next_frames": rng.random(shape),
        "tokens": tokens,
        "lengths": lengths,
        "action": rng.integers(0, config.n_actions, size=batch_size),
        "reward": rng.normal(size=batch_size),
        "done": (rng.random(batch_size) < 0.3).astype(np.float64),
    }


def numeric_grad(f, arr: np.ndarray, h: float = 1e-4, coords=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in (range(flat.size) if coords is None else coords):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def _relu_margin(cache) -> float:
    return float(min(np.abs(cache[k]).min() for k in ("z1", "z2", "zt")))


def _top2_margin(q) -> float:
    s = np.sort(q, axis=1)
    return float((s[:, -1] - s[:, -2]).min())


def check_forward(config: NetworkConfig, seed: int = 0, batch_size: int = 3,
                  h: float = 1e-4, max_coords: int | None = None,
                  margin: float = 1e-3, attempts: int = 200) -> dict:
    """Relative errors of d(sum(Q * R))/d(param) for a fixed random projection R.

    Inputs are redrawn until every ReLU pre-activation is at least
    ``margin`` away from the kink, so finite differences stay on one side.
    """
    net = QNetwork(config)
    for attempt in range(attempts):
        rng = np.random.default_rng([seed, attempt])
        params = init_params(config, seed + attempt)
        for k in params:
            if k.endswith(".b"):
                params[k] = rng.normal(scale=0.1, size=params[k].shape)
        batch = random_batch(config, batch_size, rng)
        _, cache = net.forward(params, batch["frames"], batch["tokens"], batch["lengths"],
                               keep_cache=True)
        if _relu_margin(cache) > margin:
            break
    else:
        raise RuntimeError("could not draw inputs away from ReLU kinks")
    proj = rng.normal(size=(batch_size, config.n_actions))

    def f():
        q = net.forward(params, batch["frames"], batch["tokens"], batch["lengths"])
        return float(np.sum(q * proj))

    grads = net.backward(params, cache, proj)
    return _compare(params, grads, f, h, rng, max_coords)


def check_td_loss(config: NetworkConfig, seed: int = 0, batch_size: int = 4,
                  h: float = 1e-4, double_q: bool = True, max_coords: int | None = None,
                  margin: float = 1e-3, attempts: int = 200) -> dict:
    """Same as :func:`check_forward` for the full weighted Huber TD loss.

    Besides ReLU kinks, the draw must keep TD errors away from the Huber
    corner and the bootstrap argmax away from ties.
    """
    net = QNetwork(config)
    for attempt in range(attempts):
        rng = np.random.default_rng([seed, 1, attempt])
        params = init_params(config, seed + attempt)
        for k in params:
            if k.endswith(".b"):
                params[k] = rng.normal(scale=0.1, size=params[k].shape)
        target = init_params(config, seed + attempt + 7)
        batch = random_batch(config, batch_size, rng)
        weights = rng.uniform(0.2, 1.0, size=batch_size)
        _, td, grads = td_loss_and_grad(net, params, target, batch, 0.9, double_q, weights)
        _, cache = net.forward(params, batch["frames"], batch["tokens"], batch["lengths"],
                               keep_cache=True)
        margins = [_relu_margin(cache), float(np.abs(np.abs(td) - 1.0).min())]
        if double_q:
            q_next = net.forward(params, batch["next_frames"], batch["tokens"], batch["lengths"])
            margins.append(_top2_margin(q_next))
        if min(margins) > margin:
            break
    else:
        raise RuntimeError("could not draw inputs away from loss kinks")

    def f():
        return td_loss(net, params, target, batch, 0.9, double_q, weights)[0]

    return _compare(params, grads, f, h, rng, max_coords)


def _compare(params, grads, f, h, rng, max_coords):
    errors = {}
    for name in sorted(params):
        size = params[name].size
        coords = None
        if max_coords is not None and size > max_coords:
            coords = rng.choice(size, size=max_coords, replace=False)
        num = numeric_grad(f, params[name], h, coords)
        ana = grads[name]
        if coords is not None:
            mask = np.zeros(size, dtype=bool)
            mask[coords] = True
            ana = np.where(mask.reshape(ana.shape), ana, 0.0)
        errors[name] = relative_error(ana, num)
    return errors


def run_all(tol: float = 1e-3, seed: int = 0, full_size_coords: int | None = 12) -> list[tuple]:
    """Every check as ``(label, parameter, rel_error, passed)`` rows."""
    rows = []
    for fusion in Fusion:
        cfg = replace(SMALL_CONFIG, fusion=fusion)
        for name, err in check_forward(cfg, seed).items():
            rows.append((f"forward/{fusion.value}", name, err, err <= tol))
        for double_q in (True, False):
            tag = "double" if double_q else "single"
            for name, err in check_td_loss(cfg, seed, double_q=double_q).items():
                rows.append((f"td-loss/{tag}/{fusion.value}", name, err, err <= tol))
        if full_size_coords:
            full = NetworkConfig(fusion=fusion)
            for name, err in check_forward(full, seed, batch_size=2,
                                           max_coords=full_size_coords).items():
                rows.append((f"forward-default/{fusion.value}", name, err, err <= tol))
    return rows
