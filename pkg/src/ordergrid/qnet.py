"""Multimodal dueling Q-network in plain numpy with hand-written gradients.

Pipeline: two convolutions over the stacked frames, a GRU over the
instruction tokens, gated-attention or concatenation fusion, a ReLU
trunk and dueling value/advantage heads.
"""

from __future__ import annotations

import enum
import functools
import hashlib
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .env import FRAME_STACK, N_ACTIONS, N_PLANES
from .language import VOCABULARY


class QNetError(RuntimeError):
    pass


class ShapeMismatch(QNetError, ValueError):
    pass


class TokenOutOfRange(QNetError, ValueError):
    pass


class EmptyBatch(QNetError, ValueError):
    pass


class ChecksumMismatch(QNetError):
    pass


class Fusion(enum.Enum):
    GATED_ATTENTION = "ga"
    CONCATENATION = "cat"

    @classmethod
    def parse(cls, name) -> "Fusion":
        if isinstance(name, Fusion):
            return name
        key = str(name).strip().lower()
        key = {"gated_attention": "ga", "gated-attention": "ga", "concat": "cat",
               "concatenation": "cat"}.get(key, key)
        return cls(key)


@dataclass(frozen=True)
class NetworkConfig:
    input_shape: tuple = (FRAME_STACK * N_PLANES, 10, 10)
    conv1_filters: int = 16
    conv2_filters: int = 32
    kernel: int = 3
    conv1_stride: int = 1
    conv2_stride: int = 2
    conv1_padding: int = 0
    # without it the stride-2 windows never reach the last row and column
    conv2_padding: int = 1
    embed_dim: int = 32
    instr_dim: int = 64
    hidden: int = 128
    n_actions: int = N_ACTIONS
    vocab_size: int = len(VOCABULARY)
    fusion: Fusion = Fusion.CONCATENATION

    def __post_init__(self):
        object.__setattr__(self, "fusion", Fusion.parse(self.fusion))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))

    def feature_shape(self) -> tuple:
        _, h, w = self.input_shape
        k = self.kernel
        p1, p2 = self.conv1_padding, self.conv2_padding
        h1 = _window_len(h + 2 * p1, k, self.conv1_stride)
        w1 = _window_len(w + 2 * p1, k, self.conv1_stride)
        h2 = _window_len(h1 + 2 * p2, k, self.conv2_stride)
        w2 = _window_len(w1 + 2 * p2, k, self.conv2_stride)
        if h2 < 1 or w2 < 1:
            raise ShapeMismatch(f"input {self.input_shape} too small for the conv stack")
        return (self.conv2_filters, h2, w2)

    def fused_dim(self) -> int:
        c, h, w = self.feature_shape()
        if self.fusion is Fusion.GATED_ATTENTION:
            return c * h * w
        return c * h * w + self.instr_dim

    def param_shapes(self) -> dict:
        c_in = self.input_shape[0]
        k, e, hdim = self.kernel, self.embed_dim, self.instr_dim
        shapes = {
            "conv1.w": (self.conv1_filters, c_in, k, k),
            "conv1.b": (self.conv1_filters,),
            "conv2.w": (self.conv2_filters, self.conv1_filters, k, k),
            "conv2.b": (self.conv2_filters,),
            "embed": (self.vocab_size, e),
            "gru.w_x": (3 * hdim, e),
            "gru.w_h": (3 * hdim, hdim),
            "gru.b_x": (3 * hdim,),
            "gru.b_h": (3 * hdim,),
        }
        if self.fusion is Fusion.GATED_ATTENTION:
            # one gate per image feature channel
            shapes["gate.w"] = (self.conv2_filters, hdim)
            shapes["gate.b"] = (self.conv2_filters,)
        shapes.update({
            "trunk.w": (self.hidden, self.fused_dim()),
            "trunk.b": (self.hidden,),
            "value.w": (1, self.hidden),
            "value.b": (1,),
            "adv.w": (self.n_actions, self.hidden),
            "adv.b": (self.n_actions,),
        })
        return shapes


def init_params(config: NetworkConfig, seed: int = 0) -> dict:
    """Gaussian fan-in initialisation for weights, zeros for biases."""
    rng = np.random.default_rng(seed)
    relu_fed = {"conv1.w", "conv2.w", "trunk.w"}
    params = {}
    for name, shape in config.param_shapes().items():
        if name.endswith(".b") or name.startswith("gru.b"):
            params[name] = np.zeros(shape)
        elif name == "embed":
            params[name] = rng.standard_normal(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            gain = 2.0 if name in relu_fed else 1.0
            params[name] = rng.standard_normal(shape) * np.sqrt(gain / fan_in)
    return params


def copy_params(params: dict) -> dict:
    return {k: v.copy() for k, v in params.items()}


def sigmoid(x):
    # tanh form is overflow-free for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


# ---------------------------------------------------------------- layers

def _window_len(n, k, stride):
    return (n - k) // stride + 1


@functools.lru_cache(maxsize=16)
def _patch_table(h, w, k, stride):
    """For each input pixel, the (output position, kernel offset) pairs it feeds."""
    ho, wo = _window_len(h, k, stride), _window_len(w, k, stride)
    yi, xi = np.divmod(np.arange(h * w), w)
    di = np.repeat(np.arange(k), k)
    dj = np.tile(np.arange(k), k)
    oy = yi[:, None] - di[None]
    ox = xi[:, None] - dj[None]
    ok = (oy >= 0) & (ox >= 0) & (oy % stride == 0) & (ox % stride == 0)
    oy, ox = oy // stride, ox // stride
    ok &= (oy < ho) & (ox < wo)
    pos = np.where(ok, oy * wo + ox, 0)
    off = np.broadcast_to(di * k + dj, ok.shape)
    return pos, off, ok, ho, wo


def sparse_im2col(x, k, stride):
    """im2col as a sparse matrix of shape (B * Ho * Wo, C * k * k).

    Stacked one-hot frames are ~1% non-zero, so building the patch
    matrix from the non-zeros is far cheaper than the dense copy.
    """
    bsz, c, h, w = x.shape
    pos, off, ok, ho, wo = _patch_table(h, w, k, stride)
    flat = np.flatnonzero(x != 0)
    bc, pix = np.divmod(flat, h * w)
    bi, ci = np.divmod(bc, c)
    mask = ok[pix]
    rows = (bi[:, None] * (ho * wo) + pos[pix])[mask]
    cols = (ci[:, None] * (k * k) + off[pix])[mask]
    vals = x.reshape(-1)[flat].astype(np.float64)
    data = np.broadcast_to(vals[:, None], mask.shape)[mask]
    return sparse.coo_matrix((data, (rows, cols)), shape=(bsz * ho * wo, c * k * k)), ho, wo


def conv_forward(x, w, b, stride, pad=0):
    """Convolution with ``pad`` zero cells on every side; ``x`` is (B, C, H, W), ``w`` is (F, C, k, k).

    Integer inputs (raw frames) go through the sparse patch matrix,
    float inputs through a dense one; both give the same result.
    """
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    f, c, k, _ = w.shape
    bsz, _, hgt, wid = x.shape
    wmat = w.reshape(f, -1)
    if not np.issubdtype(x.dtype, np.floating):
        cols, ho, wo = sparse_im2col(x, k, stride)
        out = np.asarray(cols @ wmat.T) + b
        out = out.reshape(bsz, ho, wo, f).transpose(0, 3, 1, 2)
        return out, (x.shape, cols, w, stride, ho, wo, pad)
    ho, wo = _window_len(hgt, k, stride), _window_len(wid, k, stride)
    cols = np.empty((bsz, c, k, k, ho, wo))
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = x[:, :, i:i + stride * (ho - 1) + 1:stride,
                                 j:j + stride * (wo - 1) + 1:stride]
    cols = cols.reshape(bsz, c * k * k, ho * wo)
    out = np.matmul(wmat, cols) + b[:, None]
    return out.reshape(bsz, f, ho, wo), (x.shape, cols, w, stride, ho, wo, pad)


def conv_backward(dout, cache, need_dx=True):
    x_shape, cols, w, stride, ho, wo, pad = cache
    f, c, k, _ = w.shape
    bsz = x_shape[0]
    wmat = w.reshape(f, -1)
    if sparse.issparse(cols):
        d2 = dout.transpose(0, 2, 3, 1).reshape(-1, f)
        dw = np.asarray(cols.T @ d2).T.reshape(w.shape)
        db = d2.sum(axis=0)
        dcols = (d2 @ wmat).reshape(bsz, ho * wo, -1).transpose(0, 2, 1) if need_dx else None
    else:
        d3 = dout.reshape(bsz, f, ho * wo)
        dw = np.tensordot(d3, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
        db = d3.sum(axis=(0, 2))
        dcols = np.matmul(wmat.T, d3) if need_dx else None
    if not need_dx:
        return None, dw, db
    dcols = dcols.reshape(bsz, c, k, k, ho, wo)
    dx = np.zeros(x_shape)
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += \
                dcols[:, :, i, j]
    if pad:
        dx = dx[:, :, pad:-pad, pad:-pad]
    return dx, dw, db


def encode_tokens(tokens, lengths, params):
    """Final GRU states for a padded batch, running each distinct sequence once.

    Replay batches repeat a handful of instructions many times over.
    """
    key = np.concatenate([lengths[:, None], np.where(
        np.arange(tokens.shape[1]) < lengths[:, None], tokens, -1)], axis=1)
    uniq, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    h, cache = gru_forward(tokens[first], lengths[first], params)
    return h[inverse], (cache, inverse, len(first))


def encode_tokens_backward(dh, cache, params):
    gru_cache, inverse, n_unique = cache
    dh_u = np.zeros((n_unique, dh.shape[1]))
    np.add.at(dh_u, inverse, dh)
    return gru_backward(dh_u, gru_cache, params)


def gru_forward(tokens, lengths, params):
    """Run the GRU over padded token ids; returns final hidden states (B, H).

    Steps at or beyond a row's length leave its hidden state untouched.
    """
    emb, wx, wh, bx, bh = (params[k] for k in ("embed", "gru.w_x", "gru.w_h", "gru.b_x", "gru.b_h"))
    # input projections depend only on the token id
    proj = emb @ wx.T + bx
    bsz, steps = tokens.shape
    hdim = wh.shape[1]
    h = np.zeros((bsz, hdim))
    caches = []
    for t in range(steps):
        m = (t < lengths).astype(np.float64)[:, None]
        gx = proj[tokens[:, t]]
        gh = h @ wh.T + bh
        r = sigmoid(gx[:, :hdim] + gh[:, :hdim])
        z = sigmoid(gx[:, hdim:2 * hdim] + gh[:, hdim:2 * hdim])
        ghn = gh[:, 2 * hdim:]
        n = np.tanh(gx[:, 2 * hdim:] + r * ghn)
        caches.append((h, r, z, n, ghn, m))
        h = m * ((1.0 - z) * n + z * h) + (1.0 - m) * h
    return h, (tokens, caches)


def gru_backward(dh, cache, params):
    tokens, caches = cache
    emb, wx, wh = params["embed"], params["gru.w_x"], params["gru.w_h"]
    dproj = np.zeros((emb.shape[0], wx.shape[0]))
    dwh = np.zeros_like(wh)
    dbh = np.zeros(wh.shape[0])
    for t in range(len(caches) - 1, -1, -1):
        h_prev, r, z, n, ghn, m = caches[t]
        dh_new = m * dh
        dn_pre = dh_new * (1.0 - z) * (1.0 - n * n)
        dz_pre = dh_new * (h_prev - n) * z * (1.0 - z)
        dr_pre = dn_pre * ghn * r * (1.0 - r)
        dgx = np.concatenate([dr_pre, dz_pre, dn_pre], axis=1)
        dgh = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=1)
        np.add.at(dproj, tokens[:, t], dgx)
        dwh += dgh.T @ h_prev
        dbh += dgh.sum(axis=0)
        dh = (1.0 - m) * dh + dh_new * z + dgh @ wh
    return {"embed": dproj @ wx, "gru.w_x": dproj.T @ emb, "gru.b_x": dproj.sum(axis=0),
            "gru.w_h": dwh, "gru.b_h": dbh}


# ------------------------------------------------------- single-purpose ops

def _batch_frames(frames, config: NetworkConfig):
    x = np.asarray(frames)
    if x.dtype == np.bool_:
        x = x.astype(np.uint8)
    elif not np.issubdtype(x.dtype, np.integer):
        x = x.astype(np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.shape[1:] != config.input_shape:
        raise ShapeMismatch(f"frames {x.shape[1:]} do not match input shape {config.input_shape}")
    return x


def pad_tokens(token_lists, vocab_size: int = len(VOCABULARY)):
    if len(token_lists) == 0:
        raise EmptyBatch("no instructions given")
    lengths = np.array([len(t) for t in token_lists], dtype=np.int64)
    if np.any(lengths == 0):
        raise TokenOutOfRange("instruction token sequence is empty")
    tokens = np.zeros((len(token_lists), int(lengths.max())), dtype=np.int64)
    for i, seq in enumerate(token_lists):
        tokens[i, :len(seq)] = seq
    _check_tokens(tokens, lengths, vocab_size)
    return tokens, lengths


def _check_tokens(tokens, lengths, vocab_size):
    if np.any(lengths < 1):
        raise TokenOutOfRange("instruction token sequence is empty")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= vocab_size):
        raise TokenOutOfRange(f"token ids must lie in [0, {vocab_size})")


def encode_image(frames, params, config: NetworkConfig) -> np.ndarray:
    x = _batch_frames(frames, config)
    a1, _ = conv_forward(x, params["conv1.w"], params["conv1.b"], config.conv1_stride,
                         config.conv1_padding)
    a2, _ = conv_forward(np.maximum(a1, 0.0), params["conv2.w"], params["conv2.b"],
                         config.conv2_stride, config.conv2_padding)
    out = np.maximum(a2, 0.0)
    return out[0] if np.ndim(frames) == 3 else out


def encode_instruction(tokens, params, config: NetworkConfig) -> np.ndarray:
    padded, lengths = pad_tokens([list(tokens)], config.vocab_size)
    h, _ = gru_forward(padded, lengths, params)
    return h[0]


def fuse_gated_attention(features, instr_vec, params) -> np.ndarray:
    gate = sigmoid(np.atleast_1d(params["gate.w"] @ instr_vec + params["gate.b"]))
    if gate.shape[0] != features.shape[-3]:
        raise ShapeMismatch(f"{gate.shape[0]} gates for {features.shape[-3]} feature channels")
    return features * gate[:, None, None]


def fuse_concat(features, instr_vec) -> np.ndarray:
    return np.concatenate([np.ravel(features), np.ravel(instr_vec)])


def dueling_combine(value, advantages) -> np.ndarray:
    a = np.asarray(advantages, dtype=np.float64)
    v = np.asarray(value, dtype=np.float64)
    if a.ndim == 2:
        return v.reshape(-1, 1) + a - a.mean(axis=1, keepdims=True)
    return float(v) + a - a.mean()


# --------------------------------------------------------------- network

@dataclass
class QNetwork:
    config: NetworkConfig = field(default_factory=NetworkConfig)

    def init(self, seed: int = 0) -> dict:
        return init_params(self.config, seed)

    def forward(self, params, frames, tokens, lengths, keep_cache=False, instr=None):
        """Batched Q-values ``(B, n_actions)`` for padded ``tokens``.

        ``instr`` may carry a precomputed ``encode_tokens`` result for the
        same tokens and parameters.
        """
        cfg = self.config
        x = _batch_frames(frames, cfg)
        tokens = np.asarray(tokens, dtype=np.int64)
        lengths = np.asarray(lengths, dtype=np.int64)
        if tokens.shape[0] != x.shape[0]:
            raise ShapeMismatch("frames and tokens disagree on batch size")
        _check_tokens(tokens, lengths, cfg.vocab_size)
        bsz = x.shape[0]

        z1, c1 = conv_forward(x, params["conv1.w"], params["conv1.b"], cfg.conv1_stride,
                              cfg.conv1_padding)
        a1 = np.maximum(z1, 0.0)
        z2, c2 = conv_forward(a1, params["conv2.w"], params["conv2.b"], cfg.conv2_stride,
                              cfg.conv2_padding)
        feat = np.maximum(z2, 0.0)
        h, cg = instr if instr is not None else encode_tokens(tokens, lengths, params)
        if cfg.fusion is Fusion.GATED_ATTENTION:
            gate = sigmoid(h @ params["gate.w"].T + params["gate.b"])
            fused = (feat * gate[:, :, None, None]).reshape(bsz, -1)
        else:
            gate = None
            fused = np.concatenate([feat.reshape(bsz, -1), h], axis=1)
        zt = fused @ params["trunk.w"].T + params["trunk.b"]
        t = np.maximum(zt, 0.0)
        v = t @ params["value.w"].T + params["value.b"]
        a = t @ params["adv.w"].T + params["adv.b"]
        q = dueling_combine(v[:, 0], a)
        if not keep_cache:
            return q
        cache = dict(c1=c1, z1=z1, c2=c2, z2=z2, feat=feat, h=h, cg=cg, gate=gate,
                     fused=fused, zt=zt, t=t)
        return q, cache

    def backward(self, params, cache, dq) -> dict:
        cfg = self.config
        bsz = dq.shape[0]
        grads = {}
        dv = dq.sum(axis=1, keepdims=True)
        da = dq - dq.mean(axis=1, keepdims=True)
        t = cache["t"]
        grads["value.w"] = dv.T @ t
        grads["value.b"] = dv.sum(axis=0)
        grads["adv.w"] = da.T @ t
        grads["adv.b"] = da.sum(axis=0)
        dt = dv @ params["value.w"] + da @ params["adv.w"]
        dzt = dt * (cache["zt"] > 0)
        grads["trunk.w"] = dzt.T @ cache["fused"]
        grads["trunk.b"] = dzt.sum(axis=0)
        dfused = dzt @ params["trunk.w"]
        feat = cache["feat"]
        if cfg.fusion is Fusion.GATED_ATTENTION:
            gate = cache["gate"]
            dgated = dfused.reshape(feat.shape)
            dfeat = dgated * gate[:, :, None, None]
            dgate = (dgated * feat).sum(axis=(2, 3))
            dgate_pre = dgate * gate * (1.0 - gate)
            grads["gate.w"] = dgate_pre.T @ cache["h"]
            grads["gate.b"] = dgate_pre.sum(axis=0)
            dh = dgate_pre @ params["gate.w"]
        else:
            nfeat = int(np.prod(feat.shape[1:]))
            dfeat = dfused[:, :nfeat].reshape(feat.shape)
            dh = dfused[:, nfeat:]
        grads.update(encode_tokens_backward(dh, cache["cg"], params))
        dz2 = dfeat * (cache["z2"] > 0)
        da1, grads["conv2.w"], grads["conv2.b"] = conv_backward(dz2, cache["c2"])
        dz1 = da1 * (cache["z1"] > 0)
        _, grads["conv1.w"], grads["conv1.b"] = conv_backward(dz1, cache["c1"], need_dx=False)
        return grads

    def encode(self, params, token_lists):
        """Pad and encode instructions once for repeated acting with fixed ``params``.

        Returns ``(tokens, lengths, h)``; row ``i`` of ``h`` is the sentence
        vector of ``token_lists[i]``.
        """
        tokens, lengths = pad_tokens([list(t) for t in token_lists], self.config.vocab_size)
        h, _ = gru_forward(tokens, lengths, params)
        return tokens, lengths, h

    def q_values(self, params, frames, token_ids, encoded=None) -> np.ndarray:
        """Q-values for a single stacked-frame observation and instruction."""
        tokens, lengths, h = encoded or self.encode(params, [token_ids])
        return self.forward(params, np.asarray(frames)[None], tokens, lengths,
                            instr=(h, None))[0]


def huber(x, delta: float = 1.0):
    ax = np.abs(x)
    return np.where(ax <= delta, 0.5 * x * x, delta * (ax - 0.5 * delta))


def _td_terms(net, params, target_params, batch, gamma, double_q, instr=None):
    tokens, lengths = batch["tokens"], batch["lengths"]
    q_next_target = net.forward(target_params, batch["next_frames"], tokens, lengths)
    if double_q:
        q_next_online = net.forward(params, batch["next_frames"], tokens, lengths, instr=instr)
        a_star = np.argmax(q_next_online, axis=1)
    else:
        a_star = np.argmax(q_next_target, axis=1)
    bootstrap = q_next_target[np.arange(len(a_star)), a_star]
    done = np.asarray(batch["done"], dtype=np.float64)
    return np.asarray(batch["reward"], dtype=np.float64) + gamma * (1.0 - done) * bootstrap


def td_loss_and_grad(net: QNetwork, params, target_params, batch, gamma: float,
                     double_q: bool = True, is_weights=None, delta: float = 1.0):
    """Weighted Huber TD loss, per-sample TD errors and parameter gradients.

    Targets are treated as constants. ``td_errors`` are
    ``Q_online(s, a) - y`` and feed prioritized replay.
    """
    bsz = len(batch["action"])
    if bsz == 0:
        raise EmptyBatch("TD loss on an empty batch")
    w = np.ones(bsz) if is_weights is None else np.asarray(is_weights, dtype=np.float64)
    tokens = np.asarray(batch["tokens"], dtype=np.int64)
    lengths = np.asarray(batch["lengths"], dtype=np.int64)
    instr = encode_tokens(tokens, lengths, params)
    y = _td_terms(net, params, target_params, batch, gamma, double_q, instr)
    q, cache = net.forward(params, batch["frames"], tokens, lengths, keep_cache=True,
                           instr=instr)
    rows = np.arange(bsz)
    actions = np.asarray(batch["action"], dtype=np.int64)
    td = q[rows, actions] - y
    loss = float(np.mean(w * huber(td, delta)))
    dq = np.zeros_like(q)
    dq[rows, actions] = w * np.clip(td, -delta, delta) / bsz
    grads = net.backward(params, cache, dq)
    return loss, td, grads


def td_loss(net: QNetwork, params, target_params, batch, gamma: float,
            double_q: bool = True, is_weights=None, delta: float = 1.0):
    bsz = len(batch["action"])
    if bsz == 0:
        raise EmptyBatch("TD loss on an empty batch")
    w = np.ones(bsz) if is_weights is None else np.asarray(is_weights, dtype=np.float64)
    y = _td_terms(net, params, target_params, batch, gamma, double_q)
    q = net.forward(params, batch["frames"], batch["tokens"], batch["lengths"])
    td = q[np.arange(bsz), np.asarray(batch["action"], dtype=np.int64)] - y
    return float(np.mean(w * huber(td, delta))), td


# -------------------------------------------------------------- optimizer

@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    def __init__(self, params: dict, config: OptimizerConfig | None = None):
        self.config = config or OptimizerConfig()
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> dict:
        """Update ``params`` in place and return it."""
        cfg = self.config
        self.t += 1
        c1 = 1.0 - cfg.beta1 ** self.t
        c2 = 1.0 - cfg.beta2 ** self.t
        for k, g in grads.items():
            if g.shape != params[k].shape:
                raise ShapeMismatch(f"gradient for {k} has shape {g.shape}, expected {params[k].shape}")
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * g * g
            params[k] -= cfg.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + cfg.eps)
        return params


# ------------------------------------------------------------- checkpoints

_MAGIC = "ordergrid-checkpoint 1"


def manifest_path(path) -> str:
    return os.fspath(path) + ".manifest"


def save_checkpoint(params: dict, path) -> None:
    """Write raw little-endian arrays to ``path`` and a text manifest beside it."""
    blobs, lines, offset = [], [], 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        raw = arr.tobytes()
        shape = "x".join(str(s) for s in arr.shape) or "scalar"
        lines.append(f"{name} {shape} float64 {offset} {len(raw)}")
        blobs.append(raw)
        offset += len(raw)
    data = b"".join(blobs)
    with open(path, "wb") as fh:
        fh.write(data)
    with open(manifest_path(path), "w", encoding="utf-8") as fh:
        fh.write(_MAGIC + "\n")
        fh.write(f"sha256 {hashlib.sha256(data).hexdigest()}\n")
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path, config: NetworkConfig | None = None) -> dict:
    with open(manifest_path(path), encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _MAGIC:
        raise QNetError(f"{manifest_path(path)} is not a checkpoint manifest")
    digest = lines[1].split()[1]
    with open(path, "rb") as fh:
        data = fh.read()
    if hashlib.sha256(data).hexdigest() != digest:
        raise ChecksumMismatch(f"checksum mismatch for {path}")
    params = {}
    for line in lines[2:]:
        if not line.strip():
            continue
        name, shape, dtype, offset, nbytes = line.split()
        shape = () if shape == "scalar" else tuple(int(s) for s in shape.split("x"))
        arr = np.frombuffer(data, dtype="<f8", count=int(nbytes) // 8, offset=int(offset))
        params[name] = arr.reshape(shape).astype(np.float64)
    if config is not None:
        expected = config.param_shapes()
        got = {k: v.shape for k, v in params.items()}
        if got != {k: tuple(v) for k, v in expected.items()}:
            raise ShapeMismatch("checkpoint parameters do not match the network config")
    return params
