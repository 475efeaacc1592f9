"""Reverse-mode automatic differentiation over numpy arrays.

Operations on :class:`Tensor` objects are recorded on the active
:class:`Tape` (if any).  Creation order is a topological order, so
:func:`backward` walks the tape in reverse and calls each node's local
vector-Jacobian product exactly once.  Outside a tape nothing is recorded,
which is how inference runs.
"""
from __future__ import annotations

import contextvars

import numpy as np

_active_tape: contextvars.ContextVar = contextvars.ContextVar("tape", default=None)


class Tape:
    """Record of differentiable operations, in execution order."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self._token = None

    def __enter__(self):
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc):
        _active_tape.reset(self._token)
        return False

    def __len__(self):
        return len(self.nodes)


class Tensor:
    __slots__ = ("data", "grad", "parents", "vjp", "op", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.parents = ()
        self.vjp = None
        self.op = "leaf"
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        label = self.name or self.op
        return f"Tensor({label}, shape={self.data.shape})"

    def numpy(self):
        return self.data

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: mul(self, -1.0)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)


def Parameter(data, name=None) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True, name=name)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def _make(data, parents, vjp, op) -> Tensor:
    out = Tensor(data)
    out.op = op
    tape = _active_tape.get()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out.vjp = vjp
        tape.nodes.append(out)
    return out


def _accumulate(t: Tensor, g, owned: bool = False):
    """Add ``g`` into ``t.grad``.  ``owned`` marks a fresh array nobody else
    holds, which can be adopted instead of copied."""
    if not t.requires_grad:
        return
    if t.grad is None:
        if owned and g.dtype == t.data.dtype:
            t.grad = g.reshape(t.data.shape)
        else:
            t.grad = np.array(g, dtype=t.data.dtype, copy=True).reshape(t.data.shape)
    else:
        t.grad += g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# numpy's reductions over a short trailing axis are slow; a product with a
# ones vector goes through BLAS instead
def _sum_last(a, keepdims=False):
    out = a @ np.ones(a.shape[-1], dtype=a.dtype)
    return out[..., None] if keepdims else out


def _sum_leading(a):
    flat = a.reshape(-1, a.shape[-1])
    return np.ones(flat.shape[0], dtype=a.dtype) @ flat


def _binary(a, b):
    # plain operands adopt the tensor operand's dtype (no silent float64 upcast)
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.dtype))
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return Tensor(np.asarray(a, dtype=b.dtype)), b
    return as_tensor(a), as_tensor(b)


def add(a, b) -> Tensor:
    a, b = _binary(a, b)

    def vjp(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = _binary(a, b)

    def vjp(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a, b = _binary(a, b)

    def vjp(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), vjp, "mul")


def matmul(a, b) -> Tensor:
    """``a @ b``; a 2-D ``b`` may be shared across leading batch axes of ``a``."""
    a, b = _binary(a, b)

    def vjp(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                a2 = a.data.reshape(-1, a.shape[-1])
                _accumulate(b, a2.T @ g.reshape(-1, g.shape[-1]))
            else:
                _accumulate(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _make(a.data @ b.data, (a, b), vjp, "matmul")


def linear(x, w, b=None) -> Tensor:
    """``x @ w + b`` with ``w`` of shape ``(d_in, d_out)`` shared over leading axes."""
    x, w = as_tensor(x), as_tensor(w)
    b = as_tensor(b) if b is not None else None
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ w.data
    if b is not None:
        out += b.data
    out = out.reshape(x.shape[:-1] + (w.shape[-1],))

    def vjp(g):
        g2 = g.reshape(-1, g.shape[-1])
        if w.requires_grad:
            _accumulate(w, x2.T @ g2, owned=True)
        if b is not None and b.requires_grad:
            _accumulate(b, _sum_leading(g2), owned=True)
        if x.requires_grad:
            _accumulate(x, (g2 @ w.data.T).reshape(x.shape), owned=True)

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, vjp, "linear")


def attention(q, k, v, key_mask, num_heads: int, dropout_rate: float = 0.0,
              generator: np.random.Generator | None = None, trace=None) -> Tensor:
    """Multi-head scaled dot-product attention on ``(B, n, d)`` inputs.

    Heads split the feature axis.  ``key_mask`` is ``(B, nk)``; masked keys
    get exactly zero weight.  Dropout applies to the attention weights.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    bsz, nq, d = q.shape
    nk = k.shape[1]
    h = num_heads
    dh = d // h
    scale = q.dtype.type(1.0 / np.sqrt(dh))
    qh = q.data.reshape(bsz, nq, h, dh).transpose(0, 2, 1, 3)
    kh = k.data.reshape(bsz, nk, h, dh).transpose(0, 2, 1, 3)
    vh = v.data.reshape(bsz, nk, h, dh).transpose(0, 2, 1, 3)
    # scores are laid out (B, h, keys, queries) so key sums are ones @ e
    mask = np.asarray(key_mask, dtype=bool)
    if not np.all(mask.any(axis=-1)):
        raise ValueError("attention over a key set with every position masked")
    bias = np.where(mask, 0.0, -np.inf).astype(q.dtype)[:, None, :, None]
    scores = (kh @ qh.transpose(0, 1, 3, 2)) * scale + bias
    ones = np.ones(nk, dtype=q.dtype)
    # one shift for the whole tensor is exact for softmax; rows that would
    # underflow fall back to a per-row shift
    e = np.exp(scores - scores.max())
    denom = ones @ e
    if not np.all(denom > np.sqrt(np.finfo(q.dtype).tiny)):
        e = np.exp(scores - scores.max(axis=-2, keepdims=True))
        denom = ones @ e
    probs_t = e / denom[..., None, :]
    if trace is not None:
        trace.append(probs_t.transpose(0, 1, 3, 2))
    if dropout_rate > 0.0 and generator is not None:
        keep = (generator.random(probs_t.shape, dtype=np.float32) >= dropout_rate)
        keep = keep.astype(q.dtype) / q.dtype.type(1.0 - dropout_rate)
        used_t = probs_t * keep
    else:
        keep = None
        used_t = probs_t
    ctx = used_t.transpose(0, 1, 3, 2) @ vh
    out = ctx.transpose(0, 2, 1, 3).reshape(bsz, nq, d)

    def vjp(g):
        gc = g.reshape(bsz, nq, h, dh).transpose(0, 2, 1, 3)
        if v.requires_grad:
            gv = used_t @ gc
            _accumulate(v, gv.transpose(0, 2, 1, 3).reshape(bsz, nk, d), owned=True)
        gp = vh @ gc.transpose(0, 1, 3, 2)
        if keep is not None:
            gp = gp * keep
        gs = probs_t * (gp - (ones @ (gp * probs_t))[..., None, :]) * scale
        if q.requires_grad:
            _accumulate(q, (gs.transpose(0, 1, 3, 2) @ kh).transpose(0, 2, 1, 3)
                        .reshape(bsz, nq, d), owned=True)
        if k.requires_grad:
            _accumulate(k, (gs @ qh).transpose(0, 2, 1, 3).reshape(bsz, nk, d), owned=True)

    return _make(out, (q, k, v), vjp, "attention")


def square(x) -> Tensor:
    x = as_tensor(x)
    return _make(x.data * x.data, (x,), lambda g: _accumulate(x, 2.0 * x.data * g), "square")


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _make(np.maximum(x.data, x.dtype.type(0)), (x,),
                 lambda g: _accumulate(x, g * mask, owned=True), "relu")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = _stable_sigmoid(x.data)
    return _make(out, (x,), lambda g: _accumulate(x, g * out * (1.0 - out)), "sigmoid")


def _stable_sigmoid(z):
    z = np.asarray(z)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(z.dtype, copy=False)


def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _make(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), vjp, "sum")


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis, keepdims), 1.0 / count)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _make(x.data.reshape(shape), (x,), lambda g: _accumulate(x, g.reshape(x.shape)),
                 "reshape")


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    inv = None if axes is None else np.argsort(axes)
    return _make(np.transpose(x.data, axes), (x,),
                 lambda g: _accumulate(x, np.transpose(g, inv)), "transpose")


def swapaxes(x, a1, a2) -> Tensor:
    axes = list(range(as_tensor(x).ndim))
    axes[a1], axes[a2] = axes[a2], axes[a1]
    return transpose(x, tuple(axes))


def masked_softmax(x, mask=None, axis=-1) -> Tensor:
    """Softmax along ``axis`` over positions where ``mask`` is true.

    Masked positions get exactly zero probability.  Every slice must keep
    at least one unmasked position.
    """
    x = as_tensor(x)
    if mask is None:
        mask = np.ones(x.shape, dtype=bool)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    if not np.all(mask.any(axis=axis)):
        raise ValueError("softmax slice with no unmasked positions")
    shifted = np.where(mask, x.data, -np.inf)
    shifted = shifted - shifted.max(axis=axis, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0).astype(x.dtype, copy=False)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        _accumulate(x, out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _make(out, (x,), vjp, "softmax")


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale by ``gamma`` and shift by ``beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    inv_d = x.dtype.type(1.0 / x.shape[-1])
    mu = _sum_last(x.data, keepdims=True) * inv_d
    xc = x.data - mu
    var = _sum_last(xc * xc, keepdims=True) * inv_d
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def vjp(g):
        if gamma.requires_grad:
            _accumulate(gamma, _sum_leading(g * xhat).reshape(gamma.shape), owned=True)
        if beta.requires_grad:
            _accumulate(beta, _sum_leading(g).reshape(beta.shape), owned=True)
        if x.requires_grad:
            gx = g * gamma.data
            gx = inv * (gx - _sum_last(gx, keepdims=True) * inv_d
                        - xhat * (_sum_last(gx * xhat, keepdims=True) * inv_d))
            _accumulate(x, gx, owned=True)

    return _make(out, (x, gamma, beta), vjp, "layer_norm")


def dropout(x, rate: float, generator: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``rate == 0`` or no generator is given."""
    x = as_tensor(x)
    if rate <= 0.0 or generator is None:
        return x
    keep = (generator.random(x.shape, dtype=np.float32) >= rate)
    keep = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return _make(x.data * keep, (x,), lambda g: _accumulate(x, g * keep, owned=True), "dropout")


def bce_with_logits(logits, labels) -> Tensor:
    """Mean binary cross-entropy of ``sigmoid(logits)`` against 0/1 labels.

    Uses ``max(z, 0) - z*y + log1p(exp(-|z|))``; accumulated in float64.
    """
    z = as_tensor(logits)
    y = np.asarray(labels, dtype=np.float64).reshape(z.shape)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")
    if z.data.size == 0:
        raise ValueError("empty batch")
    z64 = z.data.astype(np.float64)
    per = np.maximum(z64, 0.0) - z64 * y + np.log1p(np.exp(-np.abs(z64)))
    n = z64.size

    def vjp(g):
        _accumulate(z, (g * (_stable_sigmoid(z64) - y) / n).astype(z.dtype))

    return _make(np.asarray(per.mean()), (z,), vjp, "bce_with_logits")


def _raise_on_nan(tape: Tape) -> None:
    for node in tape.nodes:
        if np.isnan(node.data).any():
            raise FloatingPointError(f"NaN in forward value of op {node.op!r}")
    for node in tape.nodes:
        if node.grad is not None and np.isnan(node.grad).any():
            raise FloatingPointError(f"NaN in gradient flowing into op {node.op!r}")


def backward(tape: Tape, loss: Tensor, params=None) -> dict:
    """Gradients of the scalar ``loss`` with respect to ``params``.

    ``params`` is an iterable of leaf tensors (default: every leaf on the
    tape that requires a gradient).  Parameters the loss does not depend on
    get zero gradients.  Returns ``{tensor_name_or_id: gradient}`` in the
    order of ``params``.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.data.shape}")
    if params is None:
        seen, params = set(), []
        for node in tape.nodes:
            for p in node.parents:
                if p.requires_grad and p.op == "leaf" and id(p) not in seen:
                    seen.add(id(p))
                    params.append(p)
    params = list(params)
    for p in params:
        p.grad = None
    for node in tape.nodes:
        node.grad = None
    if loss.requires_grad:
        loss.grad = np.ones_like(loss.data)
        for node in reversed(tape.nodes):
            if node.grad is not None:
                node.vjp(node.grad)
    if not np.isfinite(loss.data).all() or any(
            p.grad is not None and np.isnan(p.grad.sum()) for p in params):
        _raise_on_nan(tape)
    grads = {}
    for p in params:
        key = p.name if p.name is not None else id(p)
        grads[key] = p.grad if p.grad is not None else np.zeros_like(p.data)
    return grads
