"""Adaptive density control over the anchor/neural binding structure."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..gsplat.gaussians import quat_to_rotmat
from .bound import FIELDS, BoundGaussianSet


@dataclass
class DensifyThresholds:
    grad: float = 2e-4
    size_fraction: float = 0.01
    min_opacity: float = 0.005
    split_factor: float = 1.6
    scene_extent: float = 1.0

    @property
    def size(self):
        return self.size_fraction * self.scene_extent


@dataclass
class DensifyResult:
    bset: BoundGaussianSet
    keep_rows: np.ndarray  # new row -> old row, -1 for fresh rows
    n_cloned: int = 0
    n_split: int = 0
    n_pruned: int = 0


def _sample(arrs, rows, rng):
    """Positions drawn from the canonical Gaussians at ``rows``."""
    if len(rows) == 0:
        return np.zeros((0, 3))
    R = quat_to_rotmat(arrs["rotation"][rows]).data
    z = rng.normal(size=(len(rows), 3)) * np.exp(arrs["log_scale"][rows])
    return arrs["mu"][rows] + np.einsum("nij,nj->ni", R, z)


def densify(bset, grad_stats, thresholds=None, rng=None, world_scale=None):
    """Clone, split and prune; returns a ``DensifyResult``.

    ``grad_stats`` is the mean screen-space positional gradient norm per row.
    ``world_scale`` is the largest world-space extent per row (defaults to the
    canonical scale). Anchors are never removed: a split anchor is resampled
    in place at the reduced scale and gains one neural child; a split neural is
    replaced by two neural children on its anchor. Pruning only removes
    neurals.
    """
    th = thresholds or DensifyThresholds()
    rng = rng if rng is not None else np.random.default_rng(0)
    arrs = bset.arrays()
    n, a = len(bset), bset.n_anchors
    grad_stats = np.asarray(grad_stats, dtype=np.float64).reshape(n)
    if world_scale is None:
        world_scale = np.exp(arrs["log_scale"]).max(axis=1)
    world_scale = np.asarray(world_scale, dtype=np.float64).reshape(n)
    anchor_of = bset.anchor_of()
    is_anchor = np.arange(n) < a

    hot = grad_stats >= th.grad
    clone = hot & (world_scale <= th.size)
    split = hot & (world_scale > th.size)
    shrink = np.log(th.split_factor)

    # anchors stay in rows [0, a); split anchors are resampled in place
    rows = {f: [arrs[f][:a].copy()] for f in FIELDS}
    keep = [np.arange(a)]
    split_anchors = np.flatnonzero(split & is_anchor)
    if split_anchors.size:
        rows["mu"][0][split_anchors] = _sample(arrs, split_anchors, rng)
        rows["log_scale"][0][split_anchors] -= shrink
        keep[0][split_anchors] = -1
    new_anchor = [np.zeros(0, np.int64)]

    def append(src, mu=None, log_scale=None, fresh=True):
        for f in FIELDS:
            rows[f].append(arrs[f][src])
        if mu is not None:
            rows["mu"][-1] = mu
        if log_scale is not None:
            rows["log_scale"][-1] = log_scale
        keep.append(np.full(len(src), -1) if fresh else src)
        new_anchor.append(anchor_of[src])

    kept_neurals = np.flatnonzero(~is_anchor & ~split)
    append(kept_neurals, fresh=False)
    split_neurals = np.flatnonzero(~is_anchor & split)
    for _ in range(2):
        append(split_neurals, _sample(arrs, split_neurals, rng), arrs["log_scale"][split_neurals] - shrink)
    append(split_anchors, _sample(arrs, split_anchors, rng), arrs["log_scale"][split_anchors] - shrink)
    cloned = np.flatnonzero(clone)
    append(cloned)

    merged = {f: np.concatenate(rows[f]) for f in FIELDS}
    keep_rows = np.concatenate(keep)
    anchor_index = np.concatenate(new_anchor)

    opacity = 1.0 / (1.0 + np.exp(-merged["opacity_logit"]))
    live = np.ones(len(keep_rows), bool)
    live[a:] = opacity[a:] >= th.min_opacity
    out = BoundGaussianSet(*(merged[f][live] for f in FIELDS), bset.face_index.copy(),
                           anchor_index[live[a:]], bset.offsets.copy(),
                           requires_grad=bset.mu.requires_grad)
    return DensifyResult(out, keep_rows[live], n_cloned=int(clone.sum()), n_split=int(split.sum()),
                         n_pruned=int((~live).sum()))
