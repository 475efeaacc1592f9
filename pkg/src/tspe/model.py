"""Encoder-decoder transformer over subgraph node sets with a column-norm head.

Subgraph A's node tokens go through the encoder, subgraph B's through the
decoder (self-attention over B, cross-attention into A).  Attention is
unmasked apart from padding.  The decoder output, transposed so each column
is one B node, is scored by the softmax of squared column norms; the
score-weighted column sum feeds a linear layer giving one logit per pair.

Blocks are post-norm: ``x = LN(x + sublayer(x))``.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from .numerics import autodiff as ad
from .numerics.autodiff import Tensor
from .numerics.rng import Xoshiro256


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 3
    num_heads: int = 8
    d_model: int = 64
    ffn_multiplier: int = 2
    dropout: float = 0.2
    input_width: int = 72
    lpe_sign_flip: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if self.d_model % self.num_heads:
            raise ValueError("d_model must be divisible by num_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.num_layers < 1 or self.input_width < 1:
            raise ValueError("num_layers and input_width must be positive")

    @property
    def ffn_hidden(self) -> int:
        return self.d_model * self.ffn_multiplier

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PairBatch:
    """Padded token tensors for B pairs; padding rows are zero and masked."""

    enc_tokens: np.ndarray   # (B, nA, width)
    enc_mask: np.ndarray     # (B, nA) bool
    dec_tokens: np.ndarray   # (B, nB, width)
    dec_mask: np.ndarray     # (B, nB) bool
    labels: np.ndarray       # (B,)

    def __len__(self):
        return self.enc_tokens.shape[0]


def _attn_names(prefix):
    return [f"{prefix}.{p}.{s}" for p in "qkvo" for s in ("w", "b")]


def param_shapes(cfg: ModelConfig) -> "OrderedDict[str, tuple]":
    d, h = cfg.d_model, cfg.ffn_hidden
    shapes = OrderedDict()
    shapes["proj.w"] = (cfg.input_width, d)
    shapes["proj.b"] = (d,)

    def attn(prefix):
        for p in "qkvo":
            shapes[f"{prefix}.{p}.w"] = (d, d)
            shapes[f"{prefix}.{p}.b"] = (d,)

    def norm(prefix):
        shapes[f"{prefix}.g"] = (d,)
        shapes[f"{prefix}.b"] = (d,)

    def ffn(prefix):
        shapes[f"{prefix}.w1"] = (d, h)
        shapes[f"{prefix}.b1"] = (h,)
        shapes[f"{prefix}.w2"] = (h, d)
        shapes[f"{prefix}.b2"] = (d,)

    for layer in range(cfg.num_layers):
        attn(f"enc.{layer}.attn")
        norm(f"enc.{layer}.norm1")
        ffn(f"enc.{layer}.ffn")
        norm(f"enc.{layer}.norm2")
    for layer in range(cfg.num_layers):
        attn(f"dec.{layer}.attn")
        norm(f"dec.{layer}.norm1")
        attn(f"dec.{layer}.xattn")
        norm(f"dec.{layer}.norm2")
        ffn(f"dec.{layer}.ffn")
        norm(f"dec.{layer}.norm3")
    shapes["head.w"] = (1, d)
    shapes["head.b"] = (1,)
    return shapes


def init_params(cfg: ModelConfig, seed: int) -> "OrderedDict[str, np.ndarray]":
    """Weights uniform in +-1/sqrt(fan_in); biases and norm shifts zero, norm gains one."""
    gen = Xoshiro256(seed).numpy_generator()
    dtype = np.dtype(cfg.dtype)
    params = OrderedDict()
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[1]
        if len(shape) == 2:
            fan_in = shape[1] if name == "head.w" else shape[0]
            bound = 1.0 / math.sqrt(fan_in)
            arr = gen.uniform(-bound, bound, size=shape)
        elif leaf == "g":
            arr = np.ones(shape)
        else:
            arr = np.zeros(shape)
        params[name] = arr.astype(dtype)
    return params


class _Ctx:
    """Per-forward state: parameter tensors, dropout stream, optional trace."""

    def __init__(self, params, cfg, generator=None, trace=None):
        self.p = params
        self.cfg = cfg
        self.gen = generator
        self.rate = cfg.dropout if generator is not None else 0.0
        self.trace = trace


def _linear(x, ctx, prefix):
    return ad.linear(x, ctx.p[f"{prefix}.w"], ctx.p[f"{prefix}.b"])


def _norm(x, ctx, prefix):
    return ad.layer_norm(x, ctx.p[f"{prefix}.g"], ctx.p[f"{prefix}.b"])


def _attention(q_in, kv_in, key_mask, ctx, prefix):
    q = _linear(q_in, ctx, f"{prefix}.q")
    k = _linear(kv_in, ctx, f"{prefix}.k")
    v = _linear(kv_in, ctx, f"{prefix}.v")
    trace = [] if ctx.trace is not None else None
    out = ad.attention(q, k, v, key_mask, ctx.cfg.num_heads, ctx.rate, ctx.gen, trace)
    if trace:
        ctx.trace.append((prefix, trace[0]))
    return _linear(out, ctx, f"{prefix}.o")


def _ffn(x, ctx, prefix):
    hidden = ad.relu(ad.linear(x, ctx.p[f"{prefix}.w1"], ctx.p[f"{prefix}.b1"]))
    hidden = ad.dropout(hidden, ctx.rate, ctx.gen)
    return ad.linear(hidden, ctx.p[f"{prefix}.w2"], ctx.p[f"{prefix}.b2"])


def _check_mask(mask, side):
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError(f"{side} mask must be (batch, tokens)")
    if not np.all(mask.any(axis=1)):
        raise ValueError(f"{side} input has a pair with every position padded")
    return mask


def project(tokens, ctx) -> Tensor:
    tokens = np.asarray(tokens, dtype=ctx.cfg.dtype)
    return _linear(ad.Tensor(tokens), ctx, "proj")


def encode(tokens_a, mask_a, ctx) -> Tensor:
    mask_a = _check_mask(mask_a, "encoder")
    x = project(tokens_a, ctx)
    for layer in range(ctx.cfg.num_layers):
        pre = f"enc.{layer}"
        x = _norm(ad.add(x, _attention(x, x, mask_a, ctx, f"{pre}.attn")), ctx, f"{pre}.norm1")
        x = _norm(ad.add(x, _ffn(x, ctx, f"{pre}.ffn")), ctx, f"{pre}.norm2")
    return x


def decode(tokens_b, mask_b, memory, mask_a, ctx) -> Tensor:
    mask_b = _check_mask(mask_b, "decoder")
    mask_a = _check_mask(mask_a, "encoder")
    x = project(tokens_b, ctx)
    for layer in range(ctx.cfg.num_layers):
        pre = f"dec.{layer}"
        x = _norm(ad.add(x, _attention(x, x, mask_b, ctx, f"{pre}.attn")), ctx, f"{pre}.norm1")
        x = _norm(ad.add(x, _attention(x, memory, mask_a, ctx, f"{pre}.xattn")), ctx,
                  f"{pre}.norm2")
        x = _norm(ad.add(x, _ffn(x, ctx, f"{pre}.ffn")), ctx, f"{pre}.norm3")
    return x


def score_columns(x, mask=None) -> Tensor:
    """Softmax over unmasked columns of the squared column norms of ``x``.

    ``x`` is ``(..., m, n)``; the result is ``(..., n)`` with exact zeros at
    masked columns.
    """
    x = ad.as_tensor(x)
    sq = ad.tsum(ad.square(x), axis=-2)
    if mask is None:
        mask = np.ones(sq.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if not np.all(mask.any(axis=-1)):
        raise ValueError("no unmasked columns to score")
    return ad.masked_softmax(sq, mask, axis=-1)


def aggregate(x, s) -> Tensor:
    """Score-weighted column sum: ``(..., m, n), (..., n) -> (..., m)``."""
    x, s = ad.as_tensor(x), ad.as_tensor(s)
    if x.shape[-1] != s.shape[-1]:
        raise ValueError(f"{x.shape[-1]} columns but {s.shape[-1]} scores")
    return ad.tsum(ad.mul(x, ad.reshape(s, s.shape[:-1] + (1, s.shape[-1]))), axis=-1)


def predict_logit(y, w, b) -> Tensor:
    """``w @ y + b`` for ``y`` of shape ``(..., m)`` and ``w`` of shape ``(1, m)``."""
    y = ad.as_tensor(y)
    w = ad.as_tensor(w, dtype=y.dtype)
    b = ad.as_tensor(b, dtype=y.dtype)
    out = ad.add(ad.matmul(y, ad.swapaxes(w, -1, -2)), b)
    return ad.reshape(out, out.shape[:-1])


def probability(logits) -> np.ndarray:
    return ad._stable_sigmoid(np.asarray(logits, dtype=np.float64))


class TransformerModel:
    def __init__(self, cfg: ModelConfig, params=None, seed: int = 0):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg, seed)
        expected = param_shapes(cfg)
        if list(self.params) != list(expected):
            raise ValueError("parameter names do not match the configuration")
        for name, shape in expected.items():
            if tuple(self.params[name].shape) != shape:
                raise ValueError(f"parameter {name} has shape {self.params[name].shape}, "
                                 f"expected {shape}")

    def leaves(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict((n, ad.Parameter(a, name=n)) for n, a in self.params.items())

    def forward(self, batch: PairBatch, leaves=None, generator=None, trace=None) -> Tensor:
        """Logits for every pair; dropout only when ``generator`` is given."""
        if leaves is None:
            leaves = OrderedDict((n, ad.Tensor(a)) for n, a in self.params.items())
        ctx = _Ctx(leaves, self.cfg, generator, trace)
        memory = encode(batch.enc_tokens, batch.enc_mask, ctx)
        out = decode(batch.dec_tokens, batch.dec_mask, memory, batch.enc_mask, ctx)
        x = ad.swapaxes(out, -1, -2)          # (B, d_model, nB): columns are B nodes
        s = score_columns(x, batch.dec_mask)
        y = aggregate(x, s)
        return predict_logit(y, leaves["head.w"], leaves["head.b"])

    def predict_proba(self, batch: PairBatch) -> np.ndarray:
        return probability(self.forward(batch).data)

    def copy_params(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, a.copy()) for n, a in self.params.items())

    def astype(self, dtype) -> "TransformerModel":
        cfg = ModelConfig(**{**self.cfg.to_dict(), "dtype": np.dtype(dtype).name})
        params = OrderedDict((n, a.astype(dtype)) for n, a in self.params.items())
        return TransformerModel(cfg, params)


def forward_pair(batch: PairBatch, model: TransformerModel, generator=None) -> Tensor:
    return model.forward(batch, generator=generator)
