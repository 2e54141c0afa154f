"""Front-to-back alpha blending of screen-space splats.

Per pixel x, with splats sorted by depth,
    c(x) = sum_k c_k a_k(x) prod_{j<k} (1 - a_j(x)) + T_final(x) * background,
    a_k(x) = min(0.99, alpha_k * G_k(x)).
Contributions below ``ALPHA_SKIP`` are skipped and blending stops before a
splat would push transmittance under ``T_STOP``.

``rasterize`` works tile by tile (16x16 by default) on dense pixel-by-splat
arrays; ``rasterize_naive`` loops pixel by pixel over every splat and exists as
the test oracle. Both evaluate identical elementwise expressions in the same
order, so their images are bit-identical.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .project import ALPHA_SKIP

ALPHA_MAX = 0.99
T_STOP = 1e-4
TILE = 16


def _footprint(dx, dy, conic, alpha):
    """Shared per-(pixel, splat) evaluation; returns (G, alpha * G clamped, clamp mask)."""
    ca = conic[..., 0, 0]
    cb = 0.5 * (conic[..., 0, 1] + conic[..., 1, 0])
    cc = conic[..., 1, 1]
    power = -0.5 * (ca * dx * dx + cc * dy * dy) - cb * dx * dy
    g = np.exp(power)
    raw = alpha * g
    return g, np.minimum(raw, ALPHA_MAX), raw > ALPHA_MAX


def depth_order(splats):
    """Front-to-back order of valid splats.

    Ties in depth are broken by splat content and only then by index, so a
    permuted input list renders identically.
    """
    idx = np.flatnonzero(splats.valid)
    s = splats
    keys = [idx]
    keys += [s.color[idx, c] for c in (2, 1, 0)]
    keys += [s.alpha[idx], s.cov2d[idx, 1, 1], s.cov2d[idx, 0, 1], s.cov2d[idx, 0, 0]]
    keys += [s.mean2d[idx, 1], s.mean2d[idx, 0], s.depth[idx]]
    return idx[np.lexsort(keys)]


def pixel_centers(cam):
    ys, xs = np.mgrid[0:cam.height, 0:cam.width]
    return xs + 0.5, ys + 0.5


@dataclass
class TileRecord:
    y0: int
    y1: int
    x0: int
    x1: int
    ids: np.ndarray  # global splat indices, depth order
    dx: np.ndarray = None
    dy: np.ndarray = None
    g: np.ndarray = None
    clamped: np.ndarray = None
    a: np.ndarray = None  # effective alpha after skip / stop masking
    T: np.ndarray = None  # transmittance in front of each splat
    T_final: np.ndarray = None


@dataclass
class RasterState:
    splats: object
    background: np.ndarray
    height: int
    width: int
    tiles: list = field(default_factory=list)


def _tile_ranges(splats, order, cam, tile):
    m, r = splats.mean2d[order], splats.radius[order]
    # pixel j has center j + 0.5; cover every center inside [m - r, m + r]
    x0 = np.floor((m[:, 0] - r[:, 0] - 0.5) / tile).astype(int)
    x1 = np.floor((m[:, 0] + r[:, 0] - 0.5) / tile).astype(int)
    y0 = np.floor((m[:, 1] - r[:, 1] - 0.5) / tile).astype(int)
    y1 = np.floor((m[:, 1] + r[:, 1] - 0.5) / tile).astype(int)
    return x0, x1, y0, y1


def _blend_tile(px, py, splats, ids, background, rec):
    P = px.size
    if ids.size == 0:
        rec.T_final = np.ones(P)
        return np.zeros((P, 3)) + 1.0 * background
    mean = splats.mean2d[ids]
    dx = px[:, None] - mean[None, :, 0]
    dy = py[:, None] - mean[None, :, 1]
    g, a, clamped = _footprint(dx, dy, splats.conic[ids][None], splats.alpha[ids][None])
    a = np.where(a >= ALPHA_SKIP, a, 0.0)
    test = np.cumprod(1.0 - a, axis=1)
    stopped = np.maximum.accumulate(test < T_STOP, axis=1)
    a = np.where(stopped, 0.0, a)
    Tcum = np.cumprod(1.0 - a, axis=1)
    T = np.concatenate([np.ones((P, 1)), Tcum[:, :-1]], axis=1)
    contrib = (splats.color[ids][None, :, :] * a[:, :, None]) * T[:, :, None]
    color = np.cumsum(contrib, axis=1)[:, -1, :]
    T_final = Tcum[:, -1]
    rec.dx, rec.dy, rec.g, rec.clamped, rec.a, rec.T, rec.T_final = dx, dy, g, clamped, a, T, T_final
    return color + T_final[:, None] * background


def rasterize(splats, cam, background=(0.0, 0.0, 0.0), tile=TILE, keep_state=False):
    """Render an (H, W, 3) image from ``Splats``; optionally return the state for backward."""
    background = np.asarray(background, dtype=np.float64)
    H, W = cam.height, cam.width
    image = np.empty((H, W, 3))
    order = depth_order(splats)
    x0, x1, y0, y1 = _tile_ranges(splats, order, cam, tile)
    state = RasterState(splats, background, H, W)
    xs_all, ys_all = pixel_centers(cam)
    for ty in range(0, (H + tile - 1) // tile):
        for tx in range(0, (W + tile - 1) // tile):
            sel = (x0 <= tx) & (x1 >= tx) & (y0 <= ty) & (y1 >= ty)
            rec = TileRecord(ty * tile, min(H, (ty + 1) * tile), tx * tile, min(W, (tx + 1) * tile),
                             order[sel])
            px = xs_all[rec.y0:rec.y1, rec.x0:rec.x1].reshape(-1)
            py = ys_all[rec.y0:rec.y1, rec.x0:rec.x1].reshape(-1)
            out = _blend_tile(px, py, splats, rec.ids, background, rec)
            image[rec.y0:rec.y1, rec.x0:rec.x1] = out.reshape(rec.y1 - rec.y0, rec.x1 - rec.x0, 3)
            if keep_state:
                state.tiles.append(rec)
    return (image, state) if keep_state else image


def rasterize_naive(splats, cam, background=(0.0, 0.0, 0.0)):
    """Per-pixel reference loop over every splat; slow, for testing only."""
    background = np.asarray(background, dtype=np.float64)
    order = depth_order(splats)
    mean, conic, alpha, color = (splats.mean2d[order], splats.conic[order],
                                 splats.alpha[order], splats.color[order])
    image = np.empty((cam.height, cam.width, 3))
    for i in range(cam.height):
        for j in range(cam.width):
            px, py = np.float64(j + 0.5), np.float64(i + 0.5)
            _, a_all, _ = _footprint(px - mean[:, 0], py - mean[:, 1], conic, alpha)
            c = np.zeros(3)
            T = 1.0
            for k in range(len(order)):
                a = a_all[k]
                if a < ALPHA_SKIP:
                    continue
                test_T = T * (1.0 - a)
                if test_T < T_STOP:
                    break
                c = c + (color[k] * a) * T
                T = test_T
            image[i, j] = c + T * background
    return image


@dataclass
class RasterGrads:
    mean2d: np.ndarray
    conic: np.ndarray  # gradient w.r.t. the full 2x2 conic
    alpha: np.ndarray
    color: np.ndarray


def rasterize_backward(state, grad_image):
    """Gradients of a scalar loss w.r.t. every splat input, given dL/dimage."""
    s = state.splats
    n = len(s)
    g_mean = np.zeros((n, 2))
    g_conic = np.zeros((n, 2, 2))
    g_alpha = np.zeros(n)
    g_color = np.zeros((n, 3))
    bg = state.background
    for rec in state.tiles:
        if rec.ids.size == 0:
            continue
        ids = rec.ids
        G = grad_image[rec.y0:rec.y1, rec.x0:rec.x1].reshape(-1, 3)
        a, T = rec.a, rec.T
        col = s.color[ids]
        w = a * T
        g_color[ids] += w.T @ G
        contrib = (col[None] * a[:, :, None]) * T[:, :, None]
        after = np.cumsum(contrib[:, ::-1], axis=1)[:, ::-1] - contrib  # sum over j > k
        tail = after + rec.T_final[:, None, None] * bg
        g_a = np.einsum("pc,pkc->pk", G, col[None] * T[:, :, None] - tail / (1.0 - a)[:, :, None])
        g_a = np.where((a > 0) & ~rec.clamped, g_a, 0.0)
        g_alpha[ids] += np.sum(g_a * rec.g, axis=0)
        g_pow = g_a * a  # d(alpha G)/d power = alpha G
        conic = s.conic[ids]
        ca = conic[:, 0, 0]
        cb = 0.5 * (conic[:, 0, 1] + conic[:, 1, 0])
        cc = conic[:, 1, 1]
        dx, dy = rec.dx, rec.dy
        g_mean[ids, 0] += np.sum(g_pow * (ca * dx + cb * dy), axis=0)
        g_mean[ids, 1] += np.sum(g_pow * (cc * dy + cb * dx), axis=0)
        g_ca = np.sum(g_pow * (-0.5 * dx * dx), axis=0)
        g_cc = np.sum(g_pow * (-0.5 * dy * dy), axis=0)
        g_cb = np.sum(g_pow * (-dx * dy), axis=0)
        g_conic[ids, 0, 0] += g_ca
        g_conic[ids, 1, 1] += g_cc
        g_conic[ids, 0, 1] += 0.5 * g_cb
        g_conic[ids, 1, 0] += 0.5 * g_cb
    return RasterGrads(g_mean, g_conic, g_alpha, g_color)
