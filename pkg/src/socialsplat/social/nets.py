"""Embedding table, query fusion, motion socialnet and Gaussian offsetnet."""
from __future__ import annotations

import numpy as np

from ..errors import ContractError, DimensionError
from ..numcore import ops
from ..numcore.nn import MLP2, Linear, Module
from ..numcore.tensor import Tensor, as_tensor


def _orthogonal_pair(rng, d, scale):
    if d < 2:
        raise DimensionError("embedding width must be at least 2")
    q, _ = np.linalg.qr(rng.normal(size=(d, 2)))
    return scale * q.T


class SocialEmbeddingTable(Module):
    """Two learnable vectors per axis, mutually orthogonal at init."""

    def __init__(self, d_s, rng, scale=1.0):
        self.d_s = d_s
        self.blood = Tensor(_orthogonal_pair(rng, d_s, scale), requires_grad=True)
        self.equality = Tensor(_orthogonal_pair(rng, d_s, scale), requires_grad=True)

    def lookup(self, rel):
        # row 0 = blood / equal, row 1 = non-blood / non-equal
        return self.blood[int(not rel.blood)], self.equality[int(not rel.equal)]


def build_query(rel, table, projection):
    b, e = table.lookup(rel)
    return projection(ops.concat([b, e], axis=-1))


def motion_socialnet(q, net):
    q = as_tensor(q)
    if q.shape[-1] != net.d_in:
        raise ContractError(f"socialnet expects width {net.d_in}, got {q.shape[-1]}")
    return net(q)


class SocialModule(Module):
    """Relationship -> query q -> motion social feature s."""

    def __init__(self, rng, d_s=16, d_q=32, d_model=64, d_hidden=None):
        self.table = SocialEmbeddingTable(d_s, rng)
        self.projection = Linear(2 * d_s, d_q, rng)
        self.socialnet = MLP2(d_q, d_hidden or d_model, d_model, rng)
        self.d_q, self.d_model = d_q, d_model

    def query(self, rel):
        return build_query(rel, self.table, self.projection)

    def forward(self, rel):
        return motion_socialnet(self.query(rel), self.socialnet)


def encode_time(t, n_freq=8, horizon=256.0):
    """[t, sin/cos pairs] with periods geometric from 2 to ``horizon`` frames."""
    t = float(t)
    if not 0.0 <= t <= 1.0 or not np.isfinite(t):
        raise ContractError(f"timestep must be normalized to [0, 1], got {t}")
    periods = np.geomspace(2.0, horizon, n_freq)
    phase = 2.0 * np.pi * t * horizon / periods
    return np.concatenate([[t], np.sin(phase), np.cos(phase)])


class GaussianOffsetNet(Module):
    """(q, t) -> per-anchor offsets (N, 3); final layer zero at init unless asked."""

    def __init__(self, n_anchors, d_q, rng, d_hidden=64, n_freq=8, horizon=256.0, zero_output=True):
        self.n_anchors, self.n_freq, self.horizon = n_anchors, n_freq, horizon
        self.mlp = MLP2(d_q + 1 + 2 * n_freq, d_hidden, 3 * n_anchors, rng, zero_output=zero_output)

    def forward(self, q, t):
        enc = encode_time(t, self.n_freq, self.horizon)
        x = ops.concat([as_tensor(q), Tensor(enc)], axis=-1)
        return ops.reshape(self.mlp(x), (self.n_anchors, 3))
