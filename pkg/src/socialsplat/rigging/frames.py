"""Per-face binding frames (R, T, lambda).

R has columns [e, n x e, n] with e the direction of edge v0->v1 and n the face
normal; T is the centroid; lambda averages the v0->v1 edge length and the
altitude from v2 onto that edge. Built from tape ops, so gradients flow from
frames back to vertex positions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateError
from ..numcore import ops
from ..numcore.tensor import Tensor, as_tensor


@dataclass
class BindingFrame:
    R: np.ndarray
    T: np.ndarray
    lam: float


@dataclass
class BindingFrames:
    """Frames for all faces; fields are tensors (F, 3, 3), (F, 3), (F,)."""

    R: Tensor
    T: Tensor
    lam: Tensor

    def __len__(self):
        return self.T.shape[0]

    def __getitem__(self, i):
        return BindingFrame(self.R.data[i].copy(), self.T.data[i].copy(), float(self.lam.data[i]))


def compute_binding_frames(vertices, faces):
    vertices = as_tensor(vertices)
    faces = np.asarray(faces, dtype=np.int64)
    v0 = vertices[faces[:, 0]]
    v1 = vertices[faces[:, 1]]
    v2 = vertices[faces[:, 2]]
    e1 = v1 - v0
    nrm = ops.cross(e1, v2 - v0)
    edge_len = ops.norm(e1, axis=-1)
    twice_area = ops.norm(nrm, axis=-1)
    scale = np.maximum(np.abs(vertices.data).max(), 1.0)
    bad = np.flatnonzero((twice_area.data <= 1e-14 * scale * scale) | (edge_len.data <= 1e-14 * scale))
    if bad.size:
        raise DegenerateError(f"degenerate faces (zero area): {bad.tolist()}")
    e = e1 / ops.reshape(edge_len, (-1, 1))
    n = nrm / ops.reshape(twice_area, (-1, 1))
    b = ops.cross(n, e)
    R = ops.stack([e, b, n], axis=-1)
    T = (v0 + v1 + v2) * (1.0 / 3.0)
    altitude = twice_area / edge_len
    lam = (edge_len + altitude) * 0.5
    return BindingFrames(R, T, lam)
