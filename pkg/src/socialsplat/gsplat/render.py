"""Differentiable rendering: projection and rasterization as one tape node."""
from __future__ import annotations

import numpy as np

from ..numcore import ops
from ..numcore.tensor import as_tensor, backward
from .project import project, project_backward
from .raster import rasterize, rasterize_backward


class ScreenGradStats:
    """Accumulates per-Gaussian screen-space positional gradient norms.

    Density control reads ``mean()``: the average norm over renders in which
    the Gaussian was visible.
    """

    def __init__(self, n):
        self.accum = np.zeros(n)
        self.count = np.zeros(n)

    def record(self, g_mean2d, visible):
        self.accum[visible] += np.linalg.norm(g_mean2d[visible], axis=1)
        self.count[visible] += 1

    def mean(self):
        return np.where(self.count > 0, self.accum / np.maximum(self.count, 1), 0.0)

    def reset(self, n=None):
        n = len(self.accum) if n is None else n
        self.accum = np.zeros(n)
        self.count = np.zeros(n)


def render_splat_tensors(position, cov3d, opacity, color, cam, background=(0.0, 0.0, 0.0),
                         stats=None, tile=16):
    """Render from world positions, 3D covariances, opacities in (0, 1) and colors.

    All inputs may be tape tensors; the result is an (H, W, 3) tensor whose
    backward rule runs the analytic rasterizer and projection gradients.
    """
    position, cov3d, opacity, color = (as_tensor(t) for t in (position, cov3d, opacity, color))
    splats, cache = project(position.data, cov3d.data, opacity.data, color.data, cam)
    image, state = rasterize(splats, cam, background, tile=tile, keep_state=True)

    def bw(g_img):
        rg = rasterize_backward(state, g_img)
        if stats is not None:
            stats.record(rg.mean2d, splats.valid)
        g_pos, g_cov = project_backward(splats, cache, cam, rg.mean2d, rg.conic)
        return g_pos, g_cov, rg.alpha, rg.color

    return ops.custom_op([position, cov3d, opacity, color], image, bw)


def render(gaussians, cam, background=(0.0, 0.0, 0.0), stats=None, tile=16):
    """Render a ``GaussianSet`` to an (H, W, 3) tensor."""
    if len(gaussians) == 0:
        return as_tensor(np.broadcast_to(np.asarray(background, dtype=np.float64),
                                         (cam.height, cam.width, 3)))
    return render_splat_tensors(gaussians.position, gaussians.covariance(), gaussians.opacity(),
                                gaussians.color, cam, background, stats, tile)


def render_image(gaussians, cam, background=(0.0, 0.0, 0.0)):
    """Plain numpy render (no tape)."""
    return np.array(render(gaussians, cam, background).data)


def render_backward(gaussians, cam, grad_image, background=(0.0, 0.0, 0.0)):
    """Gradients on every Gaussian field for an upstream image gradient.

    Returns a dict field -> array, chaining through projection, covariance
    construction, the opacity sigmoid and the quaternion normalization.
    """
    fields = gaussians.tensors()
    saved = [f.requires_grad for f in fields]
    for f in fields:
        f.requires_grad = True
        f.grad = None
    img = render(gaussians, cam, background)
    backward((img * np.asarray(grad_image)).sum())
    out = {name: (f.grad if f.grad is not None else np.zeros_like(f.data))
           for name, f in zip(gaussians.FIELDS, fields)}
    for f, r in zip(fields, saved):
        f.requires_grad = r
        f.grad = None
    return out


def render_video(scenes, cams, background=(0.0, 0.0, 0.0)):
    """One image per frame. ``cams`` is a single camera or one per frame."""
    scenes = list(scenes)
    if not isinstance(cams, (list, tuple)):
        cams = [cams] * len(scenes)
    if len(cams) != len(scenes):
        raise ValueError(f"{len(cams)} cameras for {len(scenes)} frames")
    return [render_image(s, c, background) for s, c in zip(scenes, cams)]
