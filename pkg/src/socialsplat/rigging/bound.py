"""Mesh-bound Gaussians: anchors (one per face) and neurals bound to anchors."""
from __future__ import annotations

import json
import os

import numpy as np

from ..errors import ContractError, FormatError
from ..gsplat.gaussians import GaussianSet, quat_to_rotmat
from ..numcore import ops
from ..numcore.tensor import Tensor, as_tensor

FIELDS = ("mu", "rotation", "log_scale", "opacity_logit", "color")
_WIDTHS = {"mu": 3, "rotation": 4, "log_scale": 3, "opacity_logit": 0, "color": 3}


class BoundGaussianSet:
    """Canonical Gaussians bound to mesh faces.

    Rows ``[0, A)`` are anchors (``face_index[i]`` is the face of anchor i);
    the remaining rows are neurals, ``anchor_index[j]`` naming the anchor of
    neural row ``A + j``. Offsets are per anchor and shared by its neurals.
    """

    def __init__(self, mu, rotation, log_scale, opacity_logit, color, face_index,
                 anchor_index=None, offsets=None, requires_grad=True):
        def t(x):
            return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64),
                                                          requires_grad=requires_grad)
        self.mu, self.rotation, self.log_scale = t(mu), t(rotation), t(log_scale)
        self.opacity_logit, self.color = t(opacity_logit), t(color)
        self.face_index = np.asarray(face_index, dtype=np.int64).reshape(-1)
        a = len(self.face_index)
        self.anchor_index = np.zeros(0, np.int64) if anchor_index is None else \
            np.asarray(anchor_index, dtype=np.int64).reshape(-1)
        self.offsets = np.zeros((a, 3)) if offsets is None else np.asarray(offsets, np.float64).reshape(a, 3)
        self.check()

    @property
    def n_anchors(self):
        return len(self.face_index)

    @property
    def n_neurals(self):
        return len(self.anchor_index)

    def __len__(self):
        return self.mu.shape[0]

    def tensors(self):
        return [getattr(self, f) for f in FIELDS]

    def anchor_of(self):
        """Anchor row of every Gaussian (anchors map to themselves)."""
        return np.concatenate([np.arange(self.n_anchors), self.anchor_index])

    def face_of(self):
        return self.face_index[self.anchor_of()]

    def check(self, n_faces=None):
        n = len(self)
        for f in FIELDS:
            if getattr(self, f).shape[0] != n:
                raise ContractError(f"field {f} has {getattr(self, f).shape[0]} rows, expected {n}")
        if self.n_anchors + self.n_neurals != n:
            raise ContractError(f"{self.n_anchors} anchors + {self.n_neurals} neurals != {n} rows")
        if self.n_neurals and (self.anchor_index.min() < 0 or self.anchor_index.max() >= self.n_anchors):
            raise ContractError("neural anchor_index out of range")
        if n_faces is not None and self.n_anchors and \
                (self.face_index.min() < 0 or self.face_index.max() >= n_faces):
            raise ContractError(f"face_index out of range for {n_faces} faces")
        if self.offsets.shape != (self.n_anchors, 3):
            raise ContractError(f"offsets shape {self.offsets.shape} != ({self.n_anchors}, 3)")

    def arrays(self):
        return {f: np.array(getattr(self, f).data) for f in FIELDS}

    def copy(self, requires_grad=True):
        return BoundGaussianSet(*self.arrays().values(), self.face_index.copy(),
                                self.anchor_index.copy(), self.offsets.copy(), requires_grad)


def init_anchors(mesh, opacity_logit=0.0, color=0.5, requires_grad=True):
    """One anchor per face at the frame origin, identity rotation, unit scale."""
    mesh.validate()
    f = mesh.n_faces
    rot = np.zeros((f, 4))
    rot[:, 0] = 1.0
    return BoundGaussianSet(np.zeros((f, 3)), rot, np.zeros((f, 3)), np.full(f, float(opacity_logit)),
                            np.full((f, 3), float(color)), np.arange(f), requires_grad=requires_grad)


def to_deformable(bset, frames, offsets=None):
    """World-space ``GaussianSet`` (rotation as matrices) from binding frames.

    ``offsets`` overrides the set's stored per-anchor offsets and may be a tape
    tensor (A, 3), e.g. the output of the offset network.
    """
    n_faces = len(frames)
    bset.check(n_faces)
    offsets = as_tensor(bset.offsets if offsets is None else offsets)
    if offsets.shape != (bset.n_anchors, 3):
        raise ContractError(f"offsets shape {offsets.shape} != ({bset.n_anchors}, 3)")
    face = bset.face_of()
    R = frames.R[face]
    T = frames.T[face]
    lam = frames.lam[face]
    local = ops.reshape(ops.matmul(R, ops.reshape(bset.mu, (-1, 3, 1))), (-1, 3))
    position = local * ops.reshape(lam, (-1, 1)) + T + offsets[bset.anchor_of()]
    rotation = ops.matmul(R, quat_to_rotmat(bset.rotation))
    log_scale = bset.log_scale + ops.reshape(ops.log(lam), (-1, 1))
    return GaussianSet(position, rotation, log_scale, bset.opacity_logit, bset.color)


# checkpoint: <stem>.json (counts and indices) + <stem>.bin (float64 payload)

def save_bound_set(path, bset):
    stem = os.path.splitext(str(path))[0]
    arrays = bset.arrays()
    arrays["offsets"] = bset.offsets
    layout = []
    with open(stem + ".bin", "wb") as fh:
        for name, arr in arrays.items():
            layout.append({"name": name, "shape": list(arr.shape)})
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    meta = {"format": "bound-gaussians", "version": 1, "n_anchors": bset.n_anchors,
            "n_neurals": bset.n_neurals, "face_index": bset.face_index.tolist(),
            "anchor_index": bset.anchor_index.tolist(), "payload": os.path.basename(stem + ".bin"),
            "layout": layout}
    with open(stem + ".json", "w") as fh:
        json.dump(meta, fh)


def load_bound_set(path, requires_grad=True):
    stem = os.path.splitext(str(path))[0]
    with open(stem + ".json") as fh:
        text = fh.read()
    try:
        meta = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, path=stem + ".json", offset=len(text[:exc.pos].encode())) from exc
    if meta.get("format") != "bound-gaussians":
        raise FormatError("not a bound-gaussians document", path=stem + ".json", offset=0)
    payload = os.path.join(os.path.dirname(stem), meta["payload"])
    raw = open(payload, "rb").read()
    arrays, pos = {}, 0
    for item in meta["layout"]:
        count = int(np.prod(item["shape"]))
        if pos + 8 * count > len(raw):
            raise FormatError(f"payload truncated reading {item['name']}", path=payload, offset=len(raw))
        arrays[item["name"]] = np.frombuffer(raw, "<f8", count, pos).reshape(item["shape"]).astype(np.float64)
        pos += 8 * count
    return BoundGaussianSet(*(arrays[f] for f in FIELDS), meta["face_index"], meta["anchor_index"],
                            arrays["offsets"], requires_grad)
