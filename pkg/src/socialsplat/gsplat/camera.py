"""Pinhole camera with an OpenCV-style frame (x right, y down, z forward)."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from ..errors import FormatError, ValidationError


@dataclass(frozen=True)
class Camera:
    W: np.ndarray  # 4x4 world-to-camera rigid transform
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float = 0.01

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64).reshape(4, 4)
        object.__setattr__(self, "W", W)
        R = W[:3, :3]
        if np.linalg.norm(R.T @ R - np.eye(3)) >= 1e-9:
            raise ValidationError("camera rotation block is not orthonormal")
        if not np.allclose(W[3], [0, 0, 0, 1]):
            raise ValidationError("camera transform last row must be [0, 0, 0, 1]")
        if self.near <= 0:
            raise ValidationError(f"near plane must be positive, got {self.near}")
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"image size must be >= 1, got {self.width}x{self.height}")

    @property
    def rotation(self):
        return self.W[:3, :3]

    @property
    def translation(self):
        return self.W[:3, 3]

    def world_to_camera(self, points):
        return np.asarray(points) @ self.rotation.T + self.translation

    def with_transform(self, W):
        return replace(self, W=W)

    def resized(self, width, height):
        """Same view at a new resolution; intrinsics scale with the image."""
        sx, sy = width / self.width, height / self.height
        return replace(self, fx=self.fx * sx, fy=self.fy * sy, cx=self.cx * sx,
                       cy=self.cy * sy, width=int(width), height=int(height))

    def to_dict(self):
        return {"W": self.W.reshape(-1).tolist(), "fx": self.fx, "fy": self.fy,
                "cx": self.cx, "cy": self.cy, "width": self.width,
                "height": self.height, "near": self.near}

    @classmethod
    def from_dict(cls, d):
        keys = {"W", "fx", "fy", "cx", "cy", "width", "height", "near"}
        extra = set(d) - keys
        if extra:
            raise ValidationError(f"unknown camera keys {sorted(extra)}")
        missing = keys - set(d) - {"near"}
        if missing:
            raise ValidationError(f"camera missing keys {sorted(missing)}")
        if len(d["W"]) != 16:
            raise ValidationError(f"camera W needs 16 floats, got {len(d['W'])}")
        return cls(W=np.asarray(d["W"], dtype=np.float64).reshape(4, 4),
                   fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
                   width=int(d["width"]), height=int(d["height"]), near=float(d.get("near", 0.01)))


def save_camera(cam, path):
    with open(path, "w") as fh:
        json.dump(cam.to_dict(), fh, indent=2)


def load_camera(path):
    with open(path) as fh:
        text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, path=path, offset=len(text[:exc.pos].encode())) from exc
    try:
        return Camera.from_dict(d)
    except (TypeError, ValueError, KeyError) as exc:
        raise FormatError(str(exc), path=path) from exc


def look_at(eye, target, up=(0.0, 1.0, 0.0)):
    """World-to-camera 4x4 for a camera at ``eye`` looking at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])
    W = np.eye(4)
    W[:3, :3] = R
    W[:3, 3] = -R @ eye
    return W


def simple_camera(width, height, eye=(0.0, 0.0, 3.0), target=(0.0, 0.0, 0.0), fov_deg=45.0,
                  near=0.01, up=(0.0, 1.0, 0.0)):
    f = 0.5 * width / np.tan(np.radians(fov_deg) / 2)
    return Camera(W=look_at(eye, target, up), fx=f, fy=f,
                  cx=width / 2, cy=height / 2, width=width, height=height, near=near)
