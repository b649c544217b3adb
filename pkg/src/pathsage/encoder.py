"""Path encoder: feature projection, sinusoidal positions, transformer stack.

A sampled path [c, v_1, ..., v_l] becomes a token sequence whose position
index is each node's walk distance from the central node (the central node
itself sits at position 0). After m post-norm transformer layers the
position-0 output is the path representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import OddDimension, PathTooLong, ShapeMismatch


@dataclass(frozen=True)
class PositionTable:
    max_len: int
    table: np.ndarray  # [max_len, d]


def build_position_table(max_len, d, dtype=np.float32) -> PositionTable:
    """Sinusoid table: entry (p, 2i) = sin(p / 10000^(2i/d)),
    entry (p, 2i+1) = cos(p / 10000^(2i/d)). Row 0 is [0,1,0,1,...]."""
    if d % 2 != 0:
        raise OddDimension(f"position dimension {d} must be even")
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    two_i = np.arange(0, d, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, two_i / d)
    table = np.empty((max_len, d), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return PositionTable(max_len=max_len, table=table.astype(dtype))


def _affine_init(rng, fan_in, fan_out, dtype):
    bound = 1.0 / math.sqrt(fan_in)
    w = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype),
               requires_grad=True)
    b = Tensor(np.zeros(fan_out, dtype=dtype), requires_grad=True)
    return w, b


@dataclass
class EncoderLayerParams:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    ln1_g: Tensor
    ln1_b: Tensor
    ln2_g: Tensor
    ln2_b: Tensor


@dataclass
class EncoderParams:
    hidden: int
    heads: int
    w_in: Tensor
    b_in: Tensor
    layers: list = field(default_factory=list)

    @staticmethod
    def init(rng, feature_dim, hidden, heads, num_layers, dtype=np.float32):
        if hidden % heads != 0:
            raise ShapeMismatch(f"hidden {hidden} not divisible by heads {heads}")
        w_in, b_in = _affine_init(rng, feature_dim, hidden, dtype)
        params = EncoderParams(hidden=hidden, heads=heads, w_in=w_in, b_in=b_in)
        for _ in range(num_layers):
            wq, bq = _affine_init(rng, hidden, hidden, dtype)
            wk, bk = _affine_init(rng, hidden, hidden, dtype)
            wv, bv = _affine_init(rng, hidden, hidden, dtype)
            wo, bo = _affine_init(rng, hidden, hidden, dtype)
            w1, b1 = _affine_init(rng, hidden, 4 * hidden, dtype)
            w2, b2 = _affine_init(rng, 4 * hidden, hidden, dtype)
            ones = lambda: Tensor(np.ones(hidden, dtype=dtype), requires_grad=True)
            zeros = lambda: Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True)
            params.layers.append(EncoderLayerParams(
                wq, bq, wk, bk, wv, bv, wo, bo, w1, b1, w2, b2,
                ones(), zeros(), ones(), zeros()))
        return params

    def named_params(self):
        yield "encoder.w_in", self.w_in
        yield "encoder.b_in", self.b_in
        for k, layer in enumerate(self.layers):
            for fname in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
                          "w1", "b1", "w2", "b2", "ln1_g", "ln1_b", "ln2_g", "ln2_b"):
                yield f"encoder.layer{k}.{fname}", getattr(layer, fname)


def _split_heads(x, heads):
    n, t, d = x.shape
    x = ag.reshape(x, (n, t, heads, d // heads))
    return ag.transpose(x, (0, 2, 1, 3))  # (N, h, T, dh)


def _encoder_layer(layer, x, heads, dropout_rate, train, rng):
    n, t, d = x.shape
    dh = d // heads
    q = _split_heads(ag.add(ag.matmul(x, layer.wq), layer.bq), heads)
    k = _split_heads(ag.add(ag.matmul(x, layer.wk), layer.bk), heads)
    v = _split_heads(ag.add(ag.matmul(x, layer.wv), layer.bv), heads)
    scores = ag.scale(ag.matmul(q, ag.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    attn = ag.softmax(scores)                       # (N, h, T, T)
    ctx = ag.matmul(attn, v)                        # (N, h, T, dh)
    ctx = ag.reshape(ag.transpose(ctx, (0, 2, 1, 3)), (n, t, d))
    out = ag.add(ag.matmul(ctx, layer.wo), layer.bo)
    out = ag.dropout(out, dropout_rate, train, rng)
    x = ag.layer_norm(ag.add(x, out), layer.ln1_g, layer.ln1_b)
    ff = ag.matmul(ag.relu(ag.add(ag.matmul(x, layer.w1), layer.b1)), layer.w2)
    ff = ag.dropout(ag.add(ff, layer.b2), dropout_rate, train, rng)
    x = ag.layer_norm(ag.add(x, ff), layer.ln2_g, layer.ln2_b)
    return x, attn.data.copy()


def encode_paths(params: EncoderParams, pos: PositionTable, path_features,
                 train=False, rng=None, dropout_rate=0.1):
    """Encode a batch of equal-length paths.

    path_features: Tensor or array (N, T, F) of per-token node features in
    path order. Returns (reprs (N, d) Tensor, attn list per layer of
    (N, heads, T, T) arrays).
    """
    feats = path_features if isinstance(path_features, Tensor) else Tensor(path_features)
    if feats.data.ndim != 3:
        raise ShapeMismatch("expected (N, T, F) features", feats.shape)
    t = feats.shape[1]
    if t > pos.max_len:
        raise PathTooLong(f"{t} tokens exceeds position table length {pos.max_len}")
    if feats.shape[2] != params.w_in.shape[0]:
        raise ShapeMismatch("feature width vs input projection",
                            feats.shape, params.w_in.shape)
    x = ag.add(ag.matmul(feats, params.w_in), params.b_in)
    x = ag.add(x, Tensor(pos.table[:t].astype(x.dtype)))
    attn_all = []
    for layer in params.layers:
        x, attn = _encoder_layer(layer, x, params.heads, dropout_rate, train, rng)
        attn_all.append(attn)
    reprs = ag.select(x, axis=1, index=0)  # position-0 readout
    return reprs, attn_all


def encode_path(params, pos, path_features, train=False, rng=None, dropout_rate=0.1):
    """Single-path convenience wrapper: ( (l+1) x F ) -> ([d], attn per
    layer of (heads, l+1, l+1))."""
    feats = path_features if isinstance(path_features, Tensor) else Tensor(path_features)
    if feats.data.ndim != 2:
        raise ShapeMismatch("expected (T, F) features", feats.shape)
    batched = ag.reshape(feats, (1, *feats.shape))
    reprs, attn_all = encode_paths(params, pos, batched, train, rng, dropout_rate)
    return ag.select(reprs, axis=0, index=0), [a[0] for a in attn_all]
