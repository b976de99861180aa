# Copyright (c)  2026  Fare authors
# Apache 2.0

from dataclasses import dataclass
from typing import Optional

import torch
from torch import Tensor

from fare.autograd import DTYPE, Graph


@dataclass
class LatentGaussian:
    '''Diagonal-Gaussian posterior parameters, batch-first: (N, d).'''
    mean: Tensor
    log_var: Tensor

    def __post_init__(self):
        if self.mean.shape != self.log_var.shape:
            raise ValueError(f'mean {list(self.mean.shape)} and log_var {list(self.log_var.shape)} differ')
        if not torch.isfinite(self.log_var).all():
            raise ValueError('log_var must be finite')

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]


def kl_unit_gaussian(g: LatentGaussian) -> Tensor:
    '''KL[N(mean, exp(log_var)) || N(0, I)], summed over latent dimensions.

    Returns:
      A tensor of shape (N,) for batched input, or a 0-dim tensor for a single
      d-vector.
    '''
    return 0.5 * (g.mean ** 2 + torch.exp(g.log_var) - g.log_var - 1.0).sum(dim=-1)


def sample_latent(g: LatentGaussian, generator: Optional[torch.Generator] = None,
                  mode: str = 'infer') -> Tensor:
    '''Reparameterized sample z = mean + exp(log_var / 2) * eps in train mode;
    the posterior mean in infer mode.'''
    if mode == 'infer':
        return g.mean.clone()
    if mode != 'train':
        raise ValueError(f'Unknown mode: {mode}')
    eps = torch.randn(g.mean.shape, generator=generator, dtype=DTYPE)
    return g.mean + torch.exp(0.5 * g.log_var) * eps


def kl_graph(g: Graph, mean: int, log_var: int, num_elements: int) -> int:
    '''Graph node holding the KL score summed over the batch, shape [1].

    Args:
      num_elements:
        N * d, the number of entries of `mean`; it supplies the constant -1
        term of the closed form.
    '''
    terms = g.add(g.add(g.mul(mean, mean), g.exp(log_var)), g.mul_scalar(log_var, -1.0))
    total = g.reduce_sum(terms)
    return g.mul_scalar(g.add_scalar(total, -float(num_elements)), 0.5)


def reparameterize_graph(g: Graph, mean: int, log_var: int, eps: int) -> int:
    return g.add(mean, g.mul(g.exp(g.mul_scalar(log_var, 0.5)), eps))


def squared_error_graph(g: Graph, target: int, prediction: int) -> int:
    diff = g.sub(target, prediction)
    return g.reduce_sum(g.mul(diff, diff))
