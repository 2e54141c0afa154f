"""Gaussian primitives: rotations, covariances, densities.

Rotations are quaternions ``(w, x, y, z)`` normalized on use, scales are
stored as logarithms and opacities as logits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateError, DimensionError
from ..numcore import ops
from ..numcore.tensor import Tensor, as_tensor

SCALE_FLOOR = 1e-8


def quat_to_rotmat(q):
    """(..., 4) quaternions -> (..., 3, 3) rotation matrices, differentiable."""
    q = as_tensor(q)
    q = q / ops.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    rows = [
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ]
    return ops.stack([ops.stack(r, axis=-1) for r in rows], axis=-2)


def rotmat_to_quat(R):
    """Numpy rotation matrix (3, 3) -> unit quaternion (w, x, y, z), w >= 0."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.asarray(q)
    return q if q[0] >= 0 else -q


def covariance_from_rs(rotation, log_scale):
    """Sigma = R S S^T R^T from quaternions (..., 4) or matrices (..., 3, 3)."""
    rotation, log_scale = as_tensor(rotation), as_tensor(log_scale)
    R = rotation if rotation.shape[-2:] == (3, 3) else quat_to_rotmat(rotation)
    scale = ops.exp(log_scale)
    M = R * ops.reshape(scale, scale.shape[:-1] + (1, 3))
    return ops.matmul(M, ops.swap_last(M))


@dataclass
class Gaussian3D:
    """A single primitive, plain numpy."""

    position: np.ndarray
    rotation: np.ndarray
    log_scale: np.ndarray
    opacity_logit: float = 0.0
    color: np.ndarray = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.log_scale = np.asarray(self.log_scale, dtype=np.float64)
        self.color = np.full(3, 0.5) if self.color is None else np.asarray(self.color, dtype=np.float64)

    @property
    def covariance(self):
        return covariance_from_rs(self.rotation, self.log_scale).data

    @property
    def opacity(self):
        return 1.0 / (1.0 + np.exp(-self.opacity_logit))


def evaluate_density(g, p):
    """exp(-1/2 (p - p_k)^T Sigma^-1 (p - p_k)) for a ``Gaussian3D``."""
    if np.any(np.exp(g.log_scale) < SCALE_FLOOR):
        raise DegenerateError(f"scale {np.exp(g.log_scale)} below floor {SCALE_FLOOR}")
    sigma = g.covariance
    d = np.asarray(p, dtype=np.float64) - g.position
    try:
        sol = np.linalg.solve(sigma, d)
    except np.linalg.LinAlgError as exc:
        raise DegenerateError("covariance is singular") from exc
    return float(np.exp(-0.5 * d @ sol))


class GaussianSet:
    """N Gaussians as parallel fields; each field a ``Tensor`` or numpy array.

    ``rotation`` holds quaternions (N, 4) or, for rigged Gaussians whose world
    rotation comes from a frame product, matrices (N, 3, 3).
    """

    FIELDS = ("position", "rotation", "log_scale", "opacity_logit", "color")

    def __init__(self, position, rotation, log_scale, opacity_logit, color):
        self.position = position
        self.rotation = rotation
        self.log_scale = log_scale
        self.opacity_logit = opacity_logit
        self.color = color
        n = len(position)
        for name in self.FIELDS:
            if len(getattr(self, name)) != n:
                raise DimensionError(f"field {name} has {len(getattr(self, name))} rows, expected {n}")

    def __len__(self):
        return len(self.position)

    @classmethod
    def from_list(cls, gaussians, requires_grad=False):
        def field(name):
            return Tensor(np.stack([np.asarray(getattr(g, name), dtype=np.float64) for g in gaussians]),
                          requires_grad=requires_grad)
        return cls(*(field(n) for n in cls.FIELDS))

    @classmethod
    def random(cls, n, rng, center=(0.0, 0.0, 0.0), spread=0.5, log_scale=(-2.0, -1.0),
               opacity=(0.3, 0.8), requires_grad=False):
        pos = np.asarray(center) + rng.uniform(-spread, spread, size=(n, 3))
        rot = rng.normal(size=(n, 4))
        rot /= np.linalg.norm(rot, axis=1, keepdims=True)
        ls = rng.uniform(*log_scale, size=(n, 3))
        a = rng.uniform(*opacity, size=n)
        logit = np.log(a / (1 - a))
        col = rng.uniform(0.05, 0.95, size=(n, 3))
        return cls(*(Tensor(x, requires_grad=requires_grad) for x in (pos, rot, ls, logit, col)))

    def tensors(self):
        return [getattr(self, n) for n in self.FIELDS]

    def covariance(self):
        return covariance_from_rs(self.rotation, self.log_scale)

    def opacity(self):
        return ops.sigmoid(self.opacity_logit)

    def to_list(self):
        arrs = [np.asarray(getattr(f, "data", f)) for f in self.tensors()]
        if arrs[1].ndim == 3:
            arrs[1] = np.stack([rotmat_to_quat(R) for R in arrs[1]])
        return [Gaussian3D(*(a[i] for a in arrs)) for i in range(len(self))]
