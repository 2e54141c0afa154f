"""Neural network layers on top of the tape."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from . import tensor as T
from .tensor import Tensor


class Module:
    """Container that discovers parameters from its attributes.

    Attributes that are ``Tensor`` with ``requires_grad`` count as parameters;
    attributes that are modules (or lists of modules) are walked recursively,
    in attribute-assignment order so names are stable across runs.
    """

    frozen = False

    def named_parameters(self, prefix="", trainable_only=False):
        if trainable_only and self.frozen:
            return
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".", trainable_only)
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.", trainable_only)

    def parameters(self, trainable_only=False):
        return [p for _, p in self.named_parameters(trainable_only=trainable_only)]

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state, strict=True):
        params = dict(self.named_parameters())
        if strict:
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            if missing or extra:
                raise KeyError(f"state mismatch: missing={missing} unexpected={extra}")
        for name, p in params.items():
            if name in state:
                arr = np.asarray(state[name], dtype=np.float64)
                if arr.shape != p.shape:
                    raise DimensionError(f"{name}: checkpoint shape {arr.shape} != {p.shape}")
                p.data = arr.copy()

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _uniform(rng, shape, bound):
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, d_in, d_out, rng, bias=True, zero=False):
        self.d_in, self.d_out = d_in, d_out
        bound = 1.0 / np.sqrt(d_in)
        w = np.zeros((d_in, d_out)) if zero else _uniform(rng, (d_in, d_out), bound)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(d_out) if zero else _uniform(rng, (d_out,), bound),
                           requires_grad=True) if bias else None

    def forward(self, x):
        if x.shape[-1] != self.d_in:
            raise DimensionError(f"Linear expects last dim {self.d_in}, got shape {x.shape}")
        y = T.matmul(x, self.weight) if x.ndim >= 2 else T.matmul(T.reshape(x, (1, -1)), self.weight)[0]
        return y + self.bias if self.bias is not None else y


_ACTIVATIONS = {
    "relu": T.relu,
    "tanh": T.tanh,
    "sigmoid": T.sigmoid,
    "identity": lambda x: x,
}


def mlp2_forward(x, w1, b1, w2, b2, activation="relu"):
    """``act(x @ w1 + b1) @ w2 + b2``.

    Works on a single vector or any batch of row vectors.
    """
    act = _ACTIVATIONS[activation] if isinstance(activation, str) else activation
    x = T.as_tensor(x)
    w1, w2 = T.as_tensor(w1), T.as_tensor(w2)
    if x.shape[-1] != w1.shape[0] or w1.shape[1] != w2.shape[0]:
        raise DimensionError(
            f"mlp2 shapes do not chain: x {x.shape}, w1 {w1.shape}, w2 {w2.shape}")
    squeeze = x.ndim == 1
    if squeeze:
        x = T.reshape(x, (1, -1))
    h = act(T.matmul(x, w1) + b1)
    y = T.matmul(h, w2) + b2
    return y[0] if squeeze else y


class MLP2(Module):
    """Two-layer perceptron, ReLU hidden activation, linear output."""

    def __init__(self, d_in, d_hidden, d_out, rng, activation="relu", zero_output=False):
        self.l1 = Linear(d_in, d_hidden, rng)
        self.l2 = Linear(d_hidden, d_out, rng, zero=zero_output)
        self.activation = activation

    @property
    def d_in(self):
        return self.l1.d_in

    def forward(self, x):
        return mlp2_forward(x, self.l1.weight, self.l1.bias, self.l2.weight, self.l2.bias,
                            self.activation)


class LayerNorm(Module):
    def __init__(self, d, eps=1e-5):
        self.gamma = Tensor(np.ones(d), requires_grad=True)
        self.beta = Tensor(np.zeros(d), requires_grad=True)
        self.eps = eps

    def forward(self, x):
        mu = T.mean(x, axis=-1, keepdims=True)
        xc = x - mu
        var = T.mean(xc * xc, axis=-1, keepdims=True)
        return xc / T.sqrt(var + self.eps) * self.gamma + self.beta


def causal_mask(t_q, t_k=None):
    """Boolean (t_q, t_k) mask: query i may see keys j <= i."""
    t_k = t_q if t_k is None else t_k
    return np.tril(np.ones((t_q, t_k), dtype=bool))


class MultiHeadAttention(Module):
    """Scaled dot-product attention with ``n_heads`` heads.

    ``forward(q, k, v)`` takes (..., T_q, d_q) queries and (..., T_k, d_kv)
    keys/values. The last attention weights are kept in ``last_weights`` with
    shape (..., heads, T_q, T_k) for inspection.
    """

    def __init__(self, d_model, n_heads, rng, d_query=None, d_kv=None):
        if d_model % n_heads:
            raise DimensionError(f"d_model {d_model} not divisible by {n_heads} heads")
        self.d_model, self.n_heads = d_model, n_heads
        self.d_head = d_model // n_heads
        self.q_proj = Linear(d_query or d_model, d_model, rng)
        self.k_proj = Linear(d_kv or d_model, d_model, rng)
        self.v_proj = Linear(d_kv or d_model, d_model, rng)
        self.o_proj = Linear(d_model, d_model, rng)
        self.last_weights = None

    def _split(self, x):
        lead = x.shape[:-2]
        t = x.shape[-2]
        x = T.reshape(x, lead + (t, self.n_heads, self.d_head))
        nd = x.ndim
        axes = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)
        return T.transpose(x, axes)

    def _merge(self, x):
        nd = x.ndim
        axes = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)
        x = T.transpose(x, axes)
        return T.reshape(x, x.shape[:-2] + (self.d_model,))

    def forward(self, q, k, v, mask=None):
        if k.shape[-2] != v.shape[-2]:
            raise DimensionError(f"keys {k.shape} and values {v.shape} differ in length")
        qh = self._split(self.q_proj(q))
        kh = self._split(self.k_proj(k))
        vh = self._split(self.v_proj(v))
        scores = T.matmul(qh, T.swap_last(kh)) * (1.0 / np.sqrt(self.d_head))
        if mask is not None:
            scores = scores + np.where(mask, 0.0, -np.inf)
        weights = T.softmax(scores, axis=-1)
        self.last_weights = weights.data
        return self.o_proj(self._merge(T.matmul(weights, vh)))


class FeedForward(Module):
    def __init__(self, d_model, d_ff, rng):
        self.l1 = Linear(d_model, d_ff, rng)
        self.l2 = Linear(d_ff, d_model, rng)

    def forward(self, x):
        return self.l2(T.relu(self.l1(x)))


class EncoderLayer(Module):
    """Pre-norm Transformer encoder block."""

    def __init__(self, d_model, n_heads, d_ff, rng):
        self.norm1 = LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, n_heads, rng)
        self.norm2 = LayerNorm(d_model)
        self.ff = FeedForward(d_model, d_ff, rng)

    def forward(self, x, mask=None):
        h = self.norm1(x)
        x = x + self.attn(h, h, h, mask)
        return x + self.ff(self.norm2(x))


class DecoderLayer(Module):
    """Pre-norm decoder block: masked self-attention, cross-attention, feed-forward."""

    def __init__(self, d_model, n_heads, d_ff, rng):
        self.norm1 = LayerNorm(d_model)
        self.self_attn = MultiHeadAttention(d_model, n_heads, rng)
        self.norm2 = LayerNorm(d_model)
        self.cross_attn = MultiHeadAttention(d_model, n_heads, rng)
        self.norm3 = LayerNorm(d_model)
        self.ff = FeedForward(d_model, d_ff, rng)

    def forward(self, x, memory, self_mask=None, memory_mask=None):
        h = self.norm1(x)
        x = x + self.self_attn(h, h, h, self_mask)
        x = x + self.cross_attn(self.norm2(x), memory, memory, memory_mask)
        return x + self.ff(self.norm3(x))
