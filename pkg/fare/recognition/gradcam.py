# Copyright (c)  2026  Fare authors
# Apache 2.0

from typing import List, Mapping

import torch
from torch import Tensor

from fare.autograd import Graph
from fare.models.encoder import EncoderConfig, EncoderNodes, bind_params, build_encoder, obs_batch
from fare.objectives.vib import kl_graph
from fare.recognition.heatmap import Heatmap, bilinear_upsample


def heatmaps_from_graph(g: Graph, enc: EncoderNodes, kl: int, height: int, width: int) -> List[Heatmap]:
    '''Grad-CAM of the KL score w.r.t. the last conv activations A^k.

    `kl` must be the batch sum of the per-sample KL scores; since every
    sample's score only depends on its own activations, one backward pass
    yields the per-sample gradients. The channel weights are the spatial
    means of these gradients.
    '''
    activations = g.value(enc.feature_maps)
    if activations is None:
        g.forward(kl)
        activations = g.value(enc.feature_maps)
    grad = g.backward(kl, wrt=[enc.feature_maps])[enc.feature_maps]  # (N, K, h, w)
    alpha = grad.mean(dim=(2, 3), keepdim=True)
    raw = torch.relu((alpha * activations).sum(dim=1))  # (N, h, w)
    values = bilinear_upsample(raw, height, width).clamp_min(0.0)
    return [Heatmap(values=values[i], raw=raw[i]) for i in range(raw.shape[0])]


def encoder_kl_graph(config: EncoderConfig, params: Mapping[str, Tensor], obs: Tensor):
    '''Graph computing the batch-summed KL score of a variational encoder.'''
    if not config.variational:
        raise ValueError('Grad-CAM on the KL score needs a variational encoder')
    g = Graph()
    nodes = bind_params(g, {k: v for k, v in params.items() if k.startswith('encoder.')})
    x = g.leaf(obs, name='obs')
    enc = build_encoder(g, config, nodes, x)
    n = obs.shape[0]
    kl = kl_graph(g, enc.mean, enc.log_var, n * config.latent_dim)
    return g, enc, kl


def grad_cam(config: EncoderConfig, params: Mapping[str, Tensor], obs: Tensor) -> List[Heatmap]:
    '''Grad-CAM heatmaps of the KL OOD score for a batch of observations.

    Args:
      config:
        The encoder configuration shared by the policy and the VAE.
      params:
        Model parameters; only the ``encoder.*`` entries are used, so the
        result does not depend on any decoder.
      obs:
        (C, H, W) or (N, C, H, W) observations.
    Returns:
      One heatmap per observation.
    '''
    obs = obs_batch(obs, config)
    g, enc, kl = encoder_kl_graph(config, params, obs)
    g.forward(kl)
    return heatmaps_from_graph(g, enc, kl, config.height, config.width)
