# Copyright (c)  2026  Fare authors
# Apache 2.0

from dataclasses import dataclass, field
from typing import Dict, Tuple

import torch
from torch import Tensor

Params = Dict[str, Tensor]


@dataclass
class AdamState:
    step: int = 0
    exp_avg: Params = field(default_factory=dict)
    exp_avg_sq: Params = field(default_factory=dict)


def adam_step(params: Params,
              grads: Params,
              state: AdamState,
              lr: float = 1e-3,
              beta1: float = 0.9,
              beta2: float = 0.999,
              eps: float = 1e-8) -> Tuple[Params, AdamState]:
    '''One Adam update with bias-corrected moments.

    Args:
      params:
        Parameter tensors by name. They are not modified in place.
      grads:
        Gradients by name; a missing entry is treated as a zero gradient.
      state:
        Moment estimates from the previous step, or a fresh ``AdamState()``.
    Returns:
      The updated parameters and the new state.
    '''
    step = state.step + 1
    bias1 = 1.0 - beta1 ** step
    bias2 = 1.0 - beta2 ** step
    new_params, exp_avg, exp_avg_sq = {}, {}, {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = torch.zeros_like(p)
        if g.shape != p.shape:
            raise ValueError(f'Gradient for {name} has shape {list(g.shape)}, expected {list(p.shape)}')
        m = state.exp_avg.get(name, torch.zeros_like(p))
        v = state.exp_avg_sq.get(name, torch.zeros_like(p))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        denom = (v / bias2).sqrt() + eps
        new_params[name] = p - lr * (m / bias1) / denom
        exp_avg[name] = m
        exp_avg_sq[name] = v
    return new_params, AdamState(step=step, exp_avg=exp_avg, exp_avg_sq=exp_avg_sq)


def clip_grad_value(grads: Params, clip_value: float) -> Params:
    return {name: g.clamp(-clip_value, clip_value) for name, g in grads.items()}
