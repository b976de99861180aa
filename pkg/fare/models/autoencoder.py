# Copyright (c)  2026  Fare authors
# Apache 2.0

from collections import OrderedDict
from dataclasses import replace
from typing import Dict, List, Mapping, Optional, Tuple

import math
import torch
from torch import Tensor

from fare.autograd import DTYPE, Graph
from fare.data.trajectories import TrajectorySet
from fare.models.encoder import (EncoderConfig, EncoderNodes, bind_params, build_encoder, init_encoder_params,
                                 obs_batch, uniform_init)
from fare.models.interface import NavModel
from fare.objectives.vib import LatentGaussian, kl_graph, kl_unit_gaussian, reparameterize_graph, squared_error_graph
from fare.recognition.gradcam import grad_cam
from fare.recognition.heatmap import Heatmap
from fare.training.trainer import EpochStats, TrainConfig, train_model

DECONV_KERNEL = 4
DECONV_PADDING = 1


class ConvAutoencoder(NavModel):
    '''Reconstructs the observation through the policy's encoder stack and a
    mirrored stride-2 transposed-conv decoder ending in a sigmoid.

    With a variational encoder the same weights serve two detectors: the
    reconstruction error (VAE-R) and the KL score with Grad-CAM (VAE-KL).
    '''

    def __init__(self,
                 encoder: EncoderConfig = EncoderConfig(variational=False),
                 beta: float = 1e-3,
                 seed: int = 0,
                 params: Optional['OrderedDict[str, Tensor]'] = None):
        self.encoder_config = encoder
        self.beta = beta
        self.seed = seed
        k, h, w = encoder.feature_shape()
        n = len(encoder.conv_channels)
        if (h * 2 ** n, w * 2 ** n) != (encoder.height, encoder.width):
            raise ValueError(f'Decoder cannot mirror a {encoder.height}x{encoder.width} input: '
                             f'height and width must be multiples of {2 ** n}')
        if params is None:
            generator = torch.Generator()
            generator.manual_seed(seed)
            params = init_encoder_params(encoder, generator)
            d = encoder.latent_dim
            params['decoder.fc.weight'] = uniform_init((encoder.flat_dim(), d), d, generator)
            params['decoder.fc.bias'] = torch.zeros(encoder.flat_dim(), dtype=DTYPE)
            out_channels = list(reversed(encoder.conv_channels[:-1])) + [encoder.channels]
            in_channels = encoder.conv_channels[-1]
            for i, c in enumerate(out_channels):
                fan_in = in_channels * DECONV_KERNEL * DECONV_KERNEL // 4
                params[f'decoder.deconv{i}.weight'] = uniform_init(
                    (in_channels, c, DECONV_KERNEL, DECONV_KERNEL), fan_in, generator, gain=math.sqrt(3.0))
                params[f'decoder.deconv{i}.bias'] = torch.zeros(c, dtype=DTYPE)
                in_channels = c
        self.params = params

    @property
    def kind(self) -> str:
        return 'vae' if self.encoder_config.variational else 'ae'

    @property
    def variational(self) -> bool:
        return self.encoder_config.variational

    def hparams(self) -> Dict[str, object]:
        ans = self.encoder_config.to_manifest()
        ans.update(beta=repr(self.beta), seed=self.seed)
        return ans

    @classmethod
    def from_checkpoint(cls, manifest: Mapping[str, str], params) -> 'ConvAutoencoder':
        return cls(encoder=EncoderConfig.from_manifest(manifest),
                   beta=float(manifest['beta']),
                   seed=int(manifest['seed']),
                   params=params)

    def _decoder(self, g: Graph, nodes: Mapping[str, int], z: int) -> int:
        x = g.relu(g.linear(z, nodes['decoder.fc.weight'], nodes['decoder.fc.bias']))
        x = g.reshape(x, (-1,) + self.encoder_config.feature_shape())
        num_layers = len(self.encoder_config.conv_channels)
        for i in range(num_layers):
            x = g.conv_transpose2d(x, nodes[f'decoder.deconv{i}.weight'], nodes[f'decoder.deconv{i}.bias'],
                                   stride=2, padding=DECONV_PADDING)
            x = g.relu(x) if i + 1 < num_layers else g.sigmoid(x)
        return x

    def build_graph(self, obs: Tensor, eps: Optional[Tensor] = None) -> Tuple[Graph, EncoderNodes, int, int]:
        '''Returns the graph, encoder nodes, the observation and the
        reconstruction nodes.'''
        g = Graph()
        nodes = bind_params(g, self.params)
        x = g.leaf(obs, name='obs')
        enc = build_encoder(g, self.encoder_config, nodes, x)
        z = enc.mean
        if eps is not None and self.variational:
            z = reparameterize_graph(g, enc.mean, enc.log_var, g.leaf(eps, name='eps'))
        return g, enc, x, self._decoder(g, nodes, z)

    def loss_graph(self, batch: Mapping[str, Tensor], generator: torch.Generator):
        obs = batch['obs']
        n = obs.shape[0]
        eps = None
        if self.variational:
            eps = torch.randn((n, self.encoder_config.latent_dim), generator=generator, dtype=DTYPE)
        g, enc, x, recon = self.build_graph(obs, eps)
        nodes = {node.name: node.id for node in g.nodes if node.name in self.params}
        pixels = obs[0].numel()
        mse = g.mul_scalar(squared_error_graph(g, x, recon), 1.0 / pixels)
        extras = {'mse': g.mul_scalar(mse, 1.0 / n)}
        total = mse
        if self.variational:
            kl = kl_graph(g, enc.mean, enc.log_var, n * self.encoder_config.latent_dim)
            total = g.add(mse, g.mul_scalar(kl, self.beta))
            extras['kl'] = g.mul_scalar(kl, 1.0 / n)
        return g, g.mul_scalar(total, 1.0 / n), nodes, extras

    def reconstruct(self, obs) -> Tensor:
        x = obs_batch(obs, self.encoder_config)
        g, _, _, recon = self.build_graph(x)
        return g.forward(recon)

    def kl_scores(self, obs) -> Tensor:
        '''Per-frame KL of the posterior from N(0, I), shape (N,).'''
        if not self.variational:
            raise ValueError('KL scores need variational weights')
        x = obs_batch(obs, self.encoder_config)
        g, enc, _, _ = self.build_graph(x)
        mean, log_var = g.forward(enc.mean, enc.log_var)
        return kl_unit_gaussian(LatentGaussian(mean=mean, log_var=log_var))


def train_ae(trajs: TrajectorySet,
             variational: bool,
             config: TrainConfig = TrainConfig(),
             encoder: EncoderConfig = EncoderConfig(),
             tb_writer=None) -> Tuple[ConvAutoencoder, List[EpochStats]]:
    '''Train an AE (pixel MSE) or, with `variational`, a VAE (pixel MSE plus
    beta times the KL to the unit Gaussian).'''
    encoder = replace(encoder, variational=variational)
    model = ConvAutoencoder(encoder=encoder, beta=config.beta, seed=config.seed)
    history = train_model(model, trajs, config, tb_writer=tb_writer)
    return model, history


def ae_scores(obs, model: ConvAutoencoder) -> Tuple[Tensor, List[Heatmap]]:
    '''Mean squared reconstruction error per frame and the per-pixel squared
    error maps (summed over channels).'''
    x = obs_batch(obs, model.encoder_config)
    err = (x - model.reconstruct(x)) ** 2  # (N, C, H, W)
    scores = err.mean(dim=(1, 2, 3))
    maps = err.sum(dim=1)
    return scores, [Heatmap(values=m, raw=m) for m in maps]


def vae_kl_scores(obs, model: ConvAutoencoder) -> Tuple[Tensor, List[Heatmap]]:
    '''KL scores of the VAE posterior and their Grad-CAM heatmaps.'''
    if not model.variational:
        raise ValueError('vae_kl_scores needs variational weights')
    x = obs_batch(obs, model.encoder_config)
    return model.kl_scores(x), grad_cam(model.encoder_config, model.params, x)
