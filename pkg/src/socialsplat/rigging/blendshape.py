"""Linear blendshape rig with global and neck rotations, and the BSB1 basis file."""
from __future__ import annotations

import struct

import numpy as np

from ..errors import ContractError, FormatError
from ..numcore import ops
from ..numcore.tensor import as_tensor
from .mesh import TriangleMesh

DEFAULT_GROUPS = {"EXP": 50, "JAW": 3, "POSE": 6}


def _skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _coefficients(th2):
    """a = sin t / t, b = (1 - cos t) / t^2 and their derivatives over t."""
    if th2 < 1e-6:
        a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0
        b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0
        da = -1.0 / 3.0 + th2 / 30.0
        db = -1.0 / 12.0 + th2 / 180.0
    else:
        th = np.sqrt(th2)
        s, c = np.sin(th), np.cos(th)
        a, b = s / th, (1.0 - c) / th2
        da = (th * c - s) / (th2 * th)
        db = (th * s - 2.0 * (1.0 - c)) / (th2 * th2)
    return a, b, da, db


def _rodrigues(w):
    a, b, _, _ = _coefficients(float(w @ w))
    K = _skew(w)
    return np.eye(3) + a * K + b * (K @ K)


def axis_angle_to_rotmat(w):
    """Differentiable axis-angle (3,) -> rotation matrix (3, 3)."""
    w = as_tensor(w)
    wv = w.data.reshape(3)
    R = _rodrigues(wv)

    def bw(g):
        a, b, da, db = _coefficients(float(wv @ wv))
        K = _skew(wv)
        K2 = K @ K
        out = np.empty(3)
        for i in range(3):
            Ke = _skew(np.eye(3)[i])
            dR = wv[i] * (da * K + db * K2) + a * Ke + b * (Ke @ K + K @ Ke)
            out[i] = np.sum(g * dR)
        return (out.reshape(w.shape),)

    return ops.custom_op([w], R, bw)


class BlendshapeRig:
    """vertices = base + reshape(basis @ params), then neck and global rotations.

    ``params`` follows the group layout ``EXP | JAW | POSE``; the first three
    POSE entries rotate the whole head about the base-mesh centroid, the next
    three rotate about ``neck_pivot`` (weighted per vertex by ``neck_weights``)
    and are applied first.
    """

    def __init__(self, base, basis, groups=None, neck_pivot=None, neck_weights=None):
        self.base = base
        self.basis = np.asarray(basis, dtype=np.float64)
        self.groups = dict(DEFAULT_GROUPS if groups is None else groups)
        v = len(base.vertices)
        if self.basis.shape[0] != 3 * v:
            raise ContractError(f"basis has {self.basis.shape[0]} rows, mesh needs {3 * v}")
        if self.basis.shape[1] != self.n_params:
            raise ContractError(f"basis has {self.basis.shape[1]} columns, groups sum to {self.n_params}")
        self.centroid = base.vertices.mean(axis=0)
        self.neck_pivot = self.centroid - np.array([0.0, 0.5 * np.ptp(base.vertices[:, 1]), 0.0]) \
            if neck_pivot is None else np.asarray(neck_pivot, dtype=np.float64)
        self.neck_weights = np.ones(v) if neck_weights is None else np.asarray(neck_weights, np.float64)

    @property
    def n_params(self):
        return int(sum(self.groups.values()))

    def pose_slice(self):
        start = self.n_params - self.groups.get("POSE", 0)
        return slice(start, self.n_params)

    def vertices(self, params):
        """Posed vertices (V, 3) as a tape tensor; ``params`` may be a tensor."""
        params = as_tensor(params)
        if params.shape != (self.n_params,):
            raise ContractError(f"motion frame has shape {params.shape}, rig expects ({self.n_params},)")
        disp = ops.reshape(ops.matmul(self.basis, ops.reshape(params, (-1, 1))), (-1, 3))
        verts = disp + self.base.vertices
        n_pose = self.groups.get("POSE", 0)
        if n_pose >= 6:
            p0 = self.pose_slice().start
            Rn = axis_angle_to_rotmat(params[p0 + 3:p0 + 6])
            rotated = ops.matmul(verts - self.neck_pivot, ops.swap_last(Rn)) + self.neck_pivot
            w = self.neck_weights.reshape(-1, 1)
            verts = verts * (1.0 - w) + rotated * w
        if n_pose >= 3:
            p0 = self.pose_slice().start
            Rg = axis_angle_to_rotmat(params[p0:p0 + 3])
            verts = ops.matmul(verts - self.centroid, ops.swap_last(Rg)) + self.centroid
        return verts

    def apply(self, params):
        return TriangleMesh(self.vertices(params).data, self.base.faces.copy())


def blendshape_apply(base, basis, params, groups=None):
    return BlendshapeRig(base, basis, groups).apply(params)


def save_basis(path, basis):
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim != 2 or basis.shape[0] % 3:
        raise ContractError(f"basis must be (V*3, P), got {basis.shape}")
    with open(path, "wb") as fh:
        fh.write(b"BSB1" + struct.pack("<QQ", basis.shape[0] // 3, basis.shape[1]))
        fh.write(np.ascontiguousarray(basis, dtype="<f8").tobytes())


def load_basis(path):
    raw = open(path, "rb").read()
    if raw[:4] != b"BSB1":
        raise FormatError(f"bad magic {raw[:4]!r}, expected b'BSB1'", path=path, offset=0)
    if len(raw) < 20:
        raise FormatError("header truncated", path=path, offset=len(raw))
    v, p = struct.unpack_from("<QQ", raw, 4)
    need = 20 + 8 * 3 * v * p
    if len(raw) != need:
        raise FormatError(f"payload is {len(raw) - 20} bytes, expected {need - 20}", path=path,
                          offset=min(len(raw), need))
    return np.frombuffer(raw, "<f8", 3 * v * p, 20).reshape(3 * v, p).astype(np.float64)
