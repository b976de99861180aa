# Copyright (c)  2026  Fare authors
# Apache 2.0

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import math
import torch
from torch import Tensor

from fare.autograd import DTYPE, Graph

# log-variance heads are clamped to this range for numerical stability
LOG_VAR_RANGE = (-10.0, 10.0)


@dataclass(frozen=True)
class EncoderConfig:
    """
    Args:
        channels (int): Number of image channels C
        height (int): Image height H
        width (int): Image width W
        conv_channels (tuple): Output channels of the stride-2 "same" conv layers
        kernel_size (int): Square kernel size of every conv layer
        latent_dim (int): Latent dimension d
        variational (bool): Whether a log-variance head is present
    """
    channels: int = 1
    height: int = 48
    width: int = 64
    conv_channels: Tuple[int, ...] = (8, 16, 32)
    kernel_size: int = 3
    latent_dim: int = 32
    variational: bool = True

    stride = 2

    def feature_shape(self) -> Tuple[int, int, int]:
        '''(K, h, w) of the last conv layer's activations A^k.'''
        h, w = self.height, self.width
        for _ in self.conv_channels:
            h = -(-h // self.stride)
            w = -(-w // self.stride)
        return self.conv_channels[-1], h, w

    def flat_dim(self) -> int:
        k, h, w = self.feature_shape()
        return k * h * w

    def obs_shape(self) -> Tuple[int, int, int]:
        return self.channels, self.height, self.width

    def to_manifest(self) -> Dict[str, object]:
        return {
            'C': self.channels,
            'H': self.height,
            'W': self.width,
            'd': self.latent_dim,
            'conv_channels': ','.join(str(c) for c in self.conv_channels),
            'kernel_size': self.kernel_size,
            'variational': int(self.variational),
        }

    @classmethod
    def from_manifest(cls, manifest: Mapping[str, str]) -> 'EncoderConfig':
        return cls(channels=int(manifest['C']),
                   height=int(manifest['H']),
                   width=int(manifest['W']),
                   conv_channels=tuple(int(c) for c in manifest['conv_channels'].split(',')),
                   kernel_size=int(manifest['kernel_size']),
                   latent_dim=int(manifest['d']),
                   variational=bool(int(manifest['variational'])))


def uniform_init(shape: Tuple[int, ...], fan_in: int, generator: torch.Generator,
                 gain: float = 1.0) -> Tensor:
    bound = gain / math.sqrt(fan_in)
    return (torch.rand(shape, generator=generator, dtype=DTYPE) * 2.0 - 1.0) * bound


def init_encoder_params(config: EncoderConfig, generator: torch.Generator,
                        prefix: str = 'encoder') -> 'OrderedDict[str, Tensor]':
    params = OrderedDict()
    in_channels = config.channels
    k = config.kernel_size
    for i, out_channels in enumerate(config.conv_channels):
        fan_in = in_channels * k * k
        params[f'{prefix}.conv{i}.weight'] = uniform_init((out_channels, in_channels, k, k), fan_in, generator,
                                                          gain=math.sqrt(6.0))
        params[f'{prefix}.conv{i}.bias'] = torch.zeros(out_channels, dtype=DTYPE)
        in_channels = out_channels
    flat = config.flat_dim()
    params[f'{prefix}.mean.weight'] = uniform_init((config.latent_dim, flat), flat, generator)
    params[f'{prefix}.mean.bias'] = torch.zeros(config.latent_dim, dtype=DTYPE)
    if config.variational:
        # small log-variance head so that the initial posterior is close to N(0, I)
        params[f'{prefix}.log_var.weight'] = uniform_init((config.latent_dim, flat), flat, generator, gain=0.1)
        params[f'{prefix}.log_var.bias'] = torch.zeros(config.latent_dim, dtype=DTYPE)
    return params


def bind_params(g: Graph, params: Mapping[str, Tensor]) -> Dict[str, int]:
    return {name: g.leaf(p, name=name) for name, p in params.items()}


@dataclass
class EncoderNodes:
    feature_maps: int
    mean: int
    log_var: Optional[int]


def build_encoder(g: Graph, config: EncoderConfig, nodes: Mapping[str, int], obs: int,
                  prefix: str = 'encoder') -> EncoderNodes:
    '''Add the conv encoder q(z|o) to `g`.

    Args:
      g:
        The graph to extend.
      nodes:
        Leaf node ids of the parameters, as returned by :func:`bind_params`.
      obs:
        Node holding a batch of observations of shape (N, C, H, W).
    Returns:
      Node ids of the last conv layer's activations, the posterior mean and
      (when variational) the clamped log-variance.
    '''
    x = obs
    for i in range(len(config.conv_channels)):
        x = g.conv2d(x, nodes[f'{prefix}.conv{i}.weight'], nodes[f'{prefix}.conv{i}.bias'],
                     stride=config.stride, padding='same')
        x = g.relu(x)
    feature_maps = x
    flat = g.reshape(feature_maps, (-1, config.flat_dim()))
    mean = g.linear(flat, nodes[f'{prefix}.mean.weight'], nodes[f'{prefix}.mean.bias'])
    log_var = None
    if config.variational:
        log_var = g.linear(flat, nodes[f'{prefix}.log_var.weight'], nodes[f'{prefix}.log_var.bias'])
        log_var = g.clamp(log_var, *LOG_VAR_RANGE)
    return EncoderNodes(feature_maps=feature_maps, mean=mean, log_var=log_var)


def obs_batch(obs, config: EncoderConfig) -> Tensor:
    '''Convert a (C, H, W) or (N, C, H, W) observation to a float64 batch,
    checking it against the model's input shape.'''
    x = torch.as_tensor(obs, dtype=DTYPE)
    if x.dim() == 3:
        x = x[None]
    if x.dim() != 4 or tuple(x.shape[1:]) != config.obs_shape():
        raise ValueError(f'Observation shape {list(x.shape)} does not match model input '
                         f'{list(config.obs_shape())}')
    return x
