"""Adam optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError

LR_GAUSSIAN = 5e-3
LR_NETWORK = 1e-4


@dataclass
class AdamState:
    lr: float = LR_NETWORK
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1 and self.eps > 0 and self.lr > 0):
            raise ContractError(
                f"invalid Adam hyperparameters lr={self.lr} beta1={self.beta1} "
                f"beta2={self.beta2} eps={self.eps}")


def adam_step(state, params, grads):
    """One bias-corrected Adam update, in place on ``params`` (numpy arrays).

    Moments are created lazily on the first call. Missing gradients (None) count
    as zero.
    """
    if len(params) != len(grads):
        raise ContractError(f"{len(params)} params but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ContractError(f"optimizer state holds {len(state.m)} slots for {len(params)} params")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


class Adam:
    """Adam over groups of tensors, each group with its own learning rate.

    ``groups`` maps a group name to ``(list_of_tensors, lr)``.
    """

    def __init__(self, groups, beta1=0.9, beta2=0.999, eps=1e-8):
        self.groups = {}
        for name, (tensors, lr) in groups.items():
            self.groups[name] = (list(tensors), AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps))

    def step(self):
        for tensors, state in self.groups.values():
            if tensors:
                adam_step(state, [t.data for t in tensors], [t.grad for t in tensors])

    def zero_grad(self):
        for tensors, _ in self.groups.values():
            for t in tensors:
                t.grad = None

    def replace_group(self, name, tensors, keep_rows=None):
        """Swap in new tensors for a group after density control.

        ``keep_rows[i]`` is the old row index that new row ``i`` continues, or -1
        for a fresh row whose moments start at zero.
        """
        old, state = self.groups[name]
        if state.m and keep_rows is not None:
            keep = np.asarray(keep_rows)
            fresh = keep < 0
            src = np.where(fresh, 0, keep)
            for i in range(len(state.m)):
                for mom in (state.m, state.v):
                    arr = mom[i][src].copy()
                    arr[fresh] = 0.0
                    mom[i] = arr
        elif keep_rows is None:
            state.m, state.v = [], []
        self.groups[name] = (list(tensors), state)

    def parameters(self):
        return [t for tensors, _ in self.groups.values() for t in tensors]
