"""Evaluation metrics: Frechet distances on motion statistics and image similarity."""
from __future__ import annotations

import warnings

import numpy as np
from scipy import linalg

from ..errors import ContractError
from ..numcore.tensor import no_grad
from . import losses

REG = 1e-9


class SingularCovarianceWarning(RuntimeWarning):
    pass


def _frames(seqs, group=None):
    """Stack per-frame vectors from MotionSeq objects or (T, P) arrays; ``group`` selects columns."""
    if hasattr(seqs, "frames") or isinstance(seqs, np.ndarray):
        seqs = [seqs]
    rows = []
    for s in seqs:
        if hasattr(s, "frames"):
            rows.append(s.group(group) if group else s.frames)
        else:
            rows.append(np.asarray(s, dtype=np.float64))
    return np.concatenate(rows, axis=0)


def _seq_list(x):
    single = hasattr(x, "frames") or (isinstance(x, np.ndarray) and x.ndim == 2)
    return [x] if single else list(x)


def _stats(x):
    if len(x) < 2:
        raise ContractError(f"need at least 2 frames for covariance statistics, got {len(x)}")
    return x.mean(axis=0), np.atleast_2d(np.cov(x, rowvar=False))


def frechet_from_stats(mu1, s1, mu2, s2):
    """||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)); the squared Frechet distance."""
    if np.array_equal(mu1, mu2) and np.array_equal(s1, s2):
        return 0.0
    d = mu1 - mu2
    eye = np.eye(len(s1))
    if min(np.linalg.eigvalsh(s1).min(), np.linalg.eigvalsh(s2).min()) <= 0:
        warnings.warn("singular covariance; adding 1e-9 I", SingularCovarianceWarning, stacklevel=3)
        s1, s2 = s1 + REG * eye, s2 + REG * eye
    covmean = linalg.sqrtm(s1 @ s2)
    if not np.all(np.isfinite(covmean)):
        warnings.warn("sqrtm produced non-finite values; adding 1e-9 I", SingularCovarianceWarning,
                      stacklevel=3)
        covmean = linalg.sqrtm((s1 + REG * eye) @ (s2 + REG * eye))
    covmean = np.real(covmean)
    # clamp round-off below zero; the true value is nonnegative
    return max(float(d @ d + np.trace(s1) + np.trace(s2) - 2.0 * np.trace(covmean)), 0.0)


def metric_fd(pred, gt, group=None):
    x, y = _frames(pred, group), _frames(gt, group)
    if x.shape[1] != y.shape[1]:
        raise ContractError(f"feature widths differ: {x.shape[1]} vs {y.shape[1]}")
    return frechet_from_stats(*_stats(x), *_stats(y))


def metric_pfd(pred, gt, pairing, group=None):
    """FD over per-frame [speaker-B ; paired speaker-A] concatenations.

    ``pairing`` lists the interlocutor sequence of each clip (same order as
    ``pred`` and ``gt``).
    """
    if pairing is None:
        raise ContractError("P-FD needs a partner sequence for every clip")
    pred, gt, pairing = _seq_list(pred), _seq_list(gt), _seq_list(pairing)
    if not (len(pred) == len(gt) == len(pairing)):
        raise ContractError(f"{len(pred)} predictions, {len(gt)} references, {len(pairing)} partners")

    def joint(seqs):
        rows = []
        for s, partner in zip(seqs, pairing):
            b, a = _frames(s, group), _frames(partner, group)
            if len(a) != len(b):
                raise ContractError(f"partner has {len(a)} frames, clip has {len(b)}")
            rows.append(np.concatenate([b, a], axis=1))
        return np.concatenate(rows, axis=0)

    return frechet_from_stats(*_stats(joint(pred)), *_stats(joint(gt)))


def metric_mse(pred, gt, group=None):
    x, y = _frames(pred, group), _frames(gt, group)
    if x.shape != y.shape:
        raise ContractError(f"shapes differ: {x.shape} vs {y.shape}")
    return float(np.mean((x - y) ** 2))


def _pair(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def metric_l1(a, b):
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def metric_psnr(a, b, peak=1.0):
    """PSNR in dB; identical inputs give ``float('inf')``."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))


def metric_ssim(a, b):
    a, b = _pair(a, b)
    with no_grad():
        return float(losses.ssim(a, b).item())
