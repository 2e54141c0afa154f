"""Training losses on the tape: motion, image (L1 + D-SSIM), position/offset floors, joint."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..errors import ConfigError, ContractError
from ..numcore import ops
from ..numcore.tensor import Tensor, as_tensor

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class LossWeights:
    dssim_lambda: float = 0.2
    lambda1: float = 0.5
    lambda2: float = 0.01
    lambda3: float = 0.01
    eps_pos: float = 1.0
    eps_offset: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"loss weight {f.name} must be nonnegative")
        if self.dssim_lambda > 1:
            raise ConfigError("dssim_lambda must lie in [0, 1]")


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ContractError(f"{what}: shapes differ, {a.shape} vs {b.shape}")


def l_mesh(pred, gt):
    """Root-sum-square error per clip over sqrt(frames), averaged over a leading batch axis."""
    pred, gt = as_tensor(pred), as_tensor(gt)
    _same_shape(pred, gt, "l_mesh")
    if pred.ndim < 2:
        raise ContractError(f"l_mesh expects (..., T, P) motion, got {pred.shape}")
    d = pred - gt
    t = pred.shape[-2]
    per_clip = ops.sqrt(ops.tsum(d * d, axis=(-2, -1))) * (1.0 / np.sqrt(t))
    return ops.mean(per_clip) if per_clip.ndim else per_clip


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    k = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return g / g.sum()


def filter_matrix(n, size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    """(n - size + 1, n) banded matrix applying the 1-D window at every valid offset."""
    if n < size:
        raise ContractError(f"image side {n} is smaller than the {size}-pixel SSIM window")
    g = gaussian_window(size, sigma)
    m = np.zeros((n - size + 1, n))
    for i in range(n - size + 1):
        m[i, i:i + size] = g
    return m


def ssim(a, b, data_range=1.0):
    """Mean SSIM over valid windows and channels of (H, W, C) or (H, W) images."""
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "ssim")
    if a.ndim == 2:
        a, b = ops.reshape(a, a.shape + (1,)), ops.reshape(b, b.shape + (1,))
    h, w = a.shape[0], a.shape[1]
    gh, gw = filter_matrix(h), filter_matrix(w).T
    x = ops.transpose(a, (2, 0, 1))
    y = ops.transpose(b, (2, 0, 1))

    def blur(img):
        return ops.matmul(ops.matmul(gh, img), gw)

    c1, c2 = (SSIM_K1 * data_range) ** 2, (SSIM_K2 * data_range) ** 2
    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    num = (mx * my * 2.0 + c1) * (sxy * 2.0 + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return ops.mean(num / den)


def dssim(a, b):
    return (1.0 - ssim(a, b)) * 0.5


def l1_loss(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "l1")
    return ops.mean(ops.tabs(a - b))


def l_image(render, gt, weights=None):
    w = weights or LossWeights()
    lam = w.dssim_lambda
    return l1_loss(render, gt) * (1.0 - lam) + dssim(render, gt) * lam


def floor_norm(x, eps):
    """sqrt(sum(max(|x|, eps)^2)); components at or below the floor carry no gradient."""
    x = as_tensor(x)
    m = ops.maximum(ops.tabs(x), eps)
    return ops.sqrt(ops.tsum(m * m))


def l_pos(mu_c, eps_pos=1.0):
    return floor_norm(mu_c, eps_pos)


def l_offset(c, eps_offset=1.0):
    return floor_norm(c, eps_offset)


def l_joint(mesh, image, pos, offset, weights=None):
    w = weights or LossWeights()
    return as_tensor(mesh) + as_tensor(image) * w.lambda1 + as_tensor(pos) * w.lambda2 \
        + as_tensor(offset) * w.lambda3


def loss_value(x):
    return float(x.item() if isinstance(x, Tensor) else x)
