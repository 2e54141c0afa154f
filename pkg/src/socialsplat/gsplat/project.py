"""Perspective projection of 3D Gaussians to screen-space splats (EWA)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DILATION = 0.3
ALPHA_SKIP = 1e-9


@dataclass
class Splats:
    """Screen-space splats, structure of arrays.

    ``conic`` is the full inverse of ``cov2d``. ``radius`` holds the pixel
    half-extents (x, y) of the support ellipse; ``valid`` marks splats that
    survived culling.
    """

    mean2d: np.ndarray
    cov2d: np.ndarray
    conic: np.ndarray
    depth: np.ndarray
    color: np.ndarray
    alpha: np.ndarray
    radius: np.ndarray
    valid: np.ndarray

    def __len__(self):
        return len(self.depth)

    def subset(self, idx):
        return Splats(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))


@dataclass
class ProjectionCache:
    cam_points: np.ndarray
    M: np.ndarray  # J @ R_w per splat, (N, 2, 3)
    cov3d: np.ndarray


def support_radius(cov2d, alpha):
    """Half-extents of the region where alpha * G can reach ``ALPHA_SKIP``.

    alpha * G >= t  <=>  d^T Sigma^-1 d <= 2 ln(alpha / t); the ellipse's
    axis-aligned half-widths are r * sqrt(Sigma_xx), r * sqrt(Sigma_yy).
    """
    r2 = 2.0 * np.log(np.maximum(alpha, ALPHA_SKIP) / ALPHA_SKIP)
    r = np.sqrt(r2)
    return np.stack([r * np.sqrt(cov2d[:, 0, 0]), r * np.sqrt(cov2d[:, 1, 1])], axis=-1)


def project(positions, cov3d, opacity, colors, cam):
    """Project N Gaussians. Returns (Splats, ProjectionCache)."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    cov3d = np.asarray(cov3d, dtype=np.float64).reshape(-1, 3, 3)
    n = len(positions)
    Rw = cam.rotation
    t = positions @ Rw.T + cam.translation
    tz = t[:, 2]
    in_front = tz > cam.near
    z = np.where(in_front, tz, 1.0)
    mean2d = np.stack([cam.fx * t[:, 0] / z + cam.cx, cam.fy * t[:, 1] / z + cam.cy], axis=-1)
    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = cam.fx / z
    J[:, 0, 2] = -cam.fx * t[:, 0] / (z * z)
    J[:, 1, 1] = cam.fy / z
    J[:, 1, 2] = -cam.fy * t[:, 1] / (z * z)
    M = J @ Rw
    cov2d = M @ cov3d @ np.swapaxes(M, 1, 2) + DILATION * np.eye(2)
    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] * cov2d[:, 1, 0]
    det = np.where(in_front, det, 1.0)
    conic = np.empty_like(cov2d)
    conic[:, 0, 0] = cov2d[:, 1, 1] / det
    conic[:, 0, 1] = -cov2d[:, 0, 1] / det
    conic[:, 1, 0] = -cov2d[:, 1, 0] / det
    conic[:, 1, 1] = cov2d[:, 0, 0] / det
    alpha = np.asarray(opacity, dtype=np.float64).reshape(-1)
    radius = support_radius(cov2d, alpha) + 1.0
    on_screen = ((mean2d[:, 0] + radius[:, 0] >= 0) & (mean2d[:, 0] - radius[:, 0] <= cam.width)
                 & (mean2d[:, 1] + radius[:, 1] >= 0) & (mean2d[:, 1] - radius[:, 1] <= cam.height))
    valid = in_front & on_screen & (alpha >= ALPHA_SKIP) & (det > 0)
    splats = Splats(mean2d, cov2d, conic, tz.copy(), np.asarray(colors, dtype=np.float64).reshape(-1, 3),
                    alpha, radius, valid)
    return splats, ProjectionCache(t, M, cov3d)


def project_backward(splats, cache, cam, g_mean2d, g_conic):
    """Chain screen-space gradients back to world positions and 3D covariances.

    ``g_conic`` is the gradient w.r.t. the full 2x2 conic matrix.
    Returns (g_positions (N, 3), g_cov3d (N, 3, 3)); culled splats get zeros.
    """
    conic, M, cov3d = splats.conic, cache.M, cache.cov3d
    Ct = np.swapaxes(conic, 1, 2)
    g_cov2d = -Ct @ g_conic @ Ct
    g_cov3d = np.swapaxes(M, 1, 2) @ g_cov2d @ M
    g_M = g_cov2d @ M @ np.swapaxes(cov3d, 1, 2) + np.swapaxes(g_cov2d, 1, 2) @ M @ cov3d
    g_J = g_M @ cam.rotation.T
    x, y = cache.cam_points[:, 0], cache.cam_points[:, 1]
    z = np.where(splats.valid, cache.cam_points[:, 2], 1.0)
    fx, fy = cam.fx, cam.fy
    gu, gv = g_mean2d[:, 0], g_mean2d[:, 1]
    g_t = np.zeros_like(cache.cam_points)
    g_t[:, 0] = gu * fx / z - g_J[:, 0, 2] * fx / (z * z)
    g_t[:, 1] = gv * fy / z - g_J[:, 1, 2] * fy / (z * z)
    g_t[:, 2] = (-gu * fx * x / (z * z) - gv * fy * y / (z * z)
                 - g_J[:, 0, 0] * fx / (z * z) - g_J[:, 1, 1] * fy / (z * z)
                 + g_J[:, 0, 2] * 2 * fx * x / z ** 3 + g_J[:, 1, 2] * 2 * fy * y / z ** 3)
    g_pos = g_t @ cam.rotation
    keep = splats.valid[:, None]
    return np.where(keep, g_pos, 0.0), np.where(keep[:, :, None], g_cov3d, 0.0)
