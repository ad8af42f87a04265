"""AdamW with global-norm gradient clipping and per-group learning rates."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class ParamGroup:
    params: list[Tensor]
    lr: float


@dataclass
class OptimizerState:
    groups: list[ParamGroup]
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    clip_norm: float | None = 1.0
    step: int = 0
    exp_avg: dict[int, np.ndarray] = field(default_factory=dict)
    exp_avg_sq: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def single(cls, params, lr: float, **kwargs) -> OptimizerState:
        return cls(groups=[ParamGroup(list(params), lr)], **kwargs)

    def params(self) -> list[Tensor]:
        return [p for grp in self.groups for p in grp.params]


def global_grad_norm(params) -> float:
    return float(np.sqrt(np.sum([np.sum(p.grad * p.grad) for p in params])))


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale all gradients in place so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    total = global_grad_norm(params)
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            p.grad = p.grad * scale
    return total


def adamw_step(params, state: OptimizerState) -> float:
    """One AdamW update. ``params`` must be the tensors held by ``state``.

    Returns the pre-clip gradient norm.
    """
    params = list(params)
    missing = [p.name or repr(p) for p in params if p.grad is None]
    if missing:
        raise ValueError(f"no gradient for parameters: {', '.join(missing[:5])}")
    norm = global_grad_norm(params)
    if state.clip_norm is not None:
        norm = clip_grad_norm(params, state.clip_norm)

    state.step += 1
    b1, b2 = state.betas
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    wanted = {id(p) for p in params}
    for grp in state.groups:
        for p in grp.params:
            if id(p) not in wanted:
                continue
            key = id(p)
            m = state.exp_avg.get(key)
            if m is None:
                m = state.exp_avg[key] = np.zeros_like(p.data)
                state.exp_avg_sq[key] = np.zeros_like(p.data)
            v = state.exp_avg_sq[key]
            g = p.grad
            if state.weight_decay:
                p.data *= 1.0 - grp.lr * state.weight_decay
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= grp.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return norm


def zero_grad(params) -> None:
    for p in params:
        p.grad = None
