"""Central finite-difference checks against tape gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, backward, no_grad


def finite_diff_check(f, x, h=1e-4):
    """Max abs difference between the tape gradient of ``f`` at ``x`` and
    central differences ``(f(x+h e_i) - f(x-h e_i)) / 2h``.

    ``f`` maps a Tensor to a scalar Tensor and must be deterministic.
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    leaf = Tensor(x0, requires_grad=True)
    backward(f(leaf))
    tape_grad = leaf.grad if leaf.grad is not None else np.zeros_like(x0)
    fd = _central_differences(lambda arr: f(Tensor(arr)).item(), x0, h)
    return float(np.max(np.abs(fd - tape_grad))) if x0.size else 0.0


def _central_differences(fun, x0, h):
    grad = np.zeros_like(x0)
    flat = grad.reshape(-1)
    with no_grad():
        for i in range(x0.size):
            xp = x0.copy().reshape(-1)
            xm = x0.copy().reshape(-1)
            xp[i] += h
            xm[i] -= h
            flat[i] = (fun(xp.reshape(x0.shape)) - fun(xm.reshape(x0.shape))) / (2.0 * h)
    return grad


@dataclass
class GradCheckReport:
    max_abs: float
    scale: float
    per_param: dict

    @property
    def relative(self):
        return self.max_abs / self.scale

    def __str__(self):
        return f"max|diff|={self.max_abs:.3e} scale={self.scale:.3e} rel={self.relative:.3e}"


def check_gradients(loss_fn, params, h=1e-4, names=None, scale_floor=1e-8):
    """Finite-difference check of ``loss_fn()`` w.r.t. a list of parameter tensors.

    ``loss_fn`` takes no arguments and reads the parameters through closure;
    their ``data`` arrays are perturbed in place and restored. The relative
    discrepancy divides by the largest gradient magnitude seen.
    """
    for p in params:
        p.grad = None
    backward(loss_fn())
    per_param, worst, scale = {}, 0.0, scale_floor
    for k, p in enumerate(params):
        tape = p.grad if p.grad is not None else np.zeros_like(p.data)
        orig = p.data

        def fun(arr, p=p):
            p.data = arr
            return loss_fn().item()

        fd = _central_differences(fun, orig.copy(), h)
        p.data = orig
        diff = float(np.max(np.abs(fd - tape))) if tape.size else 0.0
        per_param[names[k] if names else k] = diff
        worst = max(worst, diff)
        scale = max(scale, float(np.max(np.abs(tape), initial=0.0)), float(np.max(np.abs(fd), initial=0.0)))
    for p in params:
        p.grad = None
    return GradCheckReport(worst, scale, per_param)
