# Copyright (c)  2026  Fare authors
# Apache 2.0

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import torch
from torch import Tensor

from fare.autograd import DTYPE, Graph
from fare.conformal.band import PredictionBand, is_ood
from fare.data.trajectories import TrajectorySet
from fare.models.encoder import (EncoderConfig, EncoderNodes, bind_params, build_encoder, init_encoder_params,
                                 obs_batch, uniform_init)
from fare.models.interface import NavModel
from fare.objectives.vib import LatentGaussian, kl_graph, kl_unit_gaussian, reparameterize_graph, squared_error_graph
from fare.recognition.gradcam import heatmaps_from_graph
from fare.recognition.heatmap import Heatmap
from fare.sim.world import ActionCmd
from fare.training.trainer import EpochStats, TrainConfig, train_model


@dataclass
class PolicyGraph:
    graph: Graph
    encoder: EncoderNodes
    action_v: int  # [N, 1]
    action_omega: int  # [N, 1]
    kl: int  # [1], batch sum


@dataclass
class PolicyStepResult:
    action: ActionCmd
    score: float
    # None when no band is available
    is_ood: Optional[bool]
    heatmap: Optional[Heatmap] = None
    error: Optional[str] = None


class VibPolicy(NavModel):
    '''Imitation policy with a variational information bottleneck.

    The encoder maps an observation to a diagonal Gaussian over a latent z;
    a 2-layer perceptron decodes z into (v, omega), squashed to [0, 1] and
    [-1, 1]. The KL divergence of the posterior from N(0, I) is the OOD score.
    '''
    kind = 'policy'

    def __init__(self,
                 encoder: EncoderConfig = EncoderConfig(),
                 hidden_dim: int = 64,
                 beta: float = 1e-3,
                 seed: int = 0,
                 params: Optional['OrderedDict[str, Tensor]'] = None):
        if not encoder.variational:
            raise ValueError('VibPolicy needs a variational encoder')
        self.encoder_config = encoder
        self.hidden_dim = hidden_dim
        self.beta = beta
        self.seed = seed
        if params is None:
            generator = torch.Generator()
            generator.manual_seed(seed)
            params = init_encoder_params(encoder, generator)
            d = encoder.latent_dim
            params['decoder.fc1.weight'] = uniform_init((hidden_dim, d), d, generator)
            params['decoder.fc1.bias'] = torch.zeros(hidden_dim, dtype=DTYPE)
            params['decoder.fc2.weight'] = uniform_init((2, hidden_dim), hidden_dim, generator)
            params['decoder.fc2.bias'] = torch.zeros(2, dtype=DTYPE)
        self.params = params

    def hparams(self) -> Dict[str, object]:
        ans = self.encoder_config.to_manifest()
        ans.update(hidden_dim=self.hidden_dim, beta=repr(self.beta), seed=self.seed)
        return ans

    @classmethod
    def from_checkpoint(cls, manifest: Mapping[str, str], params: 'OrderedDict[str, Tensor]') -> 'VibPolicy':
        return cls(encoder=EncoderConfig.from_manifest(manifest),
                   hidden_dim=int(manifest['hidden_dim']),
                   beta=float(manifest['beta']),
                   seed=int(manifest['seed']),
                   params=params)

    # ------------------------------------------------------------------

    def _decoder(self, g: Graph, nodes: Mapping[str, int], z: int) -> Tuple[int, int]:
        h = g.relu(g.linear(z, nodes['decoder.fc1.weight'], nodes['decoder.fc1.bias']))
        out = g.linear(h, nodes['decoder.fc2.weight'], nodes['decoder.fc2.bias'])
        return g.sigmoid(g.select(out, 0)), g.tanh(g.select(out, 1))

    def build_graph(self, obs: Tensor, eps: Optional[Tensor] = None) -> Tuple[PolicyGraph, Dict[str, int]]:
        '''Policy graph for a batch; z is the posterior mean unless the
        reparameterization noise `eps` is given.'''
        g = Graph()
        nodes = bind_params(g, self.params)
        x = g.leaf(obs, name='obs')
        enc = build_encoder(g, self.encoder_config, nodes, x)
        if eps is None:
            z = enc.mean
        else:
            z = reparameterize_graph(g, enc.mean, enc.log_var, g.leaf(eps, name='eps'))
        v, omega = self._decoder(g, nodes, z)
        kl = kl_graph(g, enc.mean, enc.log_var, obs.shape[0] * self.encoder_config.latent_dim)
        return PolicyGraph(graph=g, encoder=enc, action_v=v, action_omega=omega, kl=kl), nodes

    def loss_graph(self, batch: Mapping[str, Tensor], generator: torch.Generator,
                   beta: Optional[float] = None):
        obs, action = batch['obs'], batch['action']
        n = obs.shape[0]
        if n == 0:
            raise ValueError('vib loss needs a non-empty batch')
        beta = self.beta if beta is None else beta
        eps = torch.randn((n, self.encoder_config.latent_dim), generator=generator, dtype=DTYPE)
        pg, nodes = self.build_graph(obs, eps)
        g = pg.graph
        target_v = g.leaf(action[:, 0:1], name='target_v')
        target_omega = g.leaf(action[:, 1:2], name='target_omega')
        squared_error = g.add(squared_error_graph(g, target_v, pg.action_v),
                              squared_error_graph(g, target_omega, pg.action_omega))
        total = g.add(squared_error, g.mul_scalar(pg.kl, beta))
        loss = g.mul_scalar(total, 1.0 / n)
        extras = {'kl': g.mul_scalar(pg.kl, 1.0 / n), 'mse': g.mul_scalar(squared_error, 1.0 / n)}
        return g, loss, nodes, extras

    # ------------------------------------------------------------------

    def encode(self, obs) -> Tuple[LatentGaussian, Tensor]:
        '''Posterior parameters and the last conv activations A^k.'''
        x = obs_batch(obs, self.encoder_config)
        pg, _ = self.build_graph(x)
        enc = pg.encoder
        mean, log_var, feature_maps = pg.graph.forward(enc.mean, enc.log_var, enc.feature_maps)
        return LatentGaussian(mean=mean, log_var=log_var), feature_maps

    def decode_actions(self, z: Tensor) -> Tensor:
        '''(N, d) latents to (N, 2) actions [v, omega].'''
        z = torch.as_tensor(z, dtype=DTYPE)
        if z.dim() == 1:
            z = z[None]
        if z.shape[-1] != self.encoder_config.latent_dim:
            raise ValueError(f'z has {z.shape[-1]} dims, expected {self.encoder_config.latent_dim}')
        g = Graph()
        nodes = bind_params(g, {k: p for k, p in self.params.items() if k.startswith('decoder.')})
        v, omega = self._decoder(g, nodes, g.leaf(z, name='z'))
        return torch.cat(g.forward(v, omega), dim=1)

    def decode_action(self, z: Tensor) -> ActionCmd:
        a = self.decode_actions(z)[0]
        return ActionCmd(v=float(a[0]), omega=float(a[1]))

    def scores(self, obs) -> Tensor:
        '''Per-frame KL scores for a batch of observations, shape (N,).'''
        posterior, _ = self.encode(obs)
        return kl_unit_gaussian(posterior)

    def act(self, obs) -> Tuple[Tensor, Tensor]:
        '''Batched inference: (N, 2) actions from z = mean and (N,) KL scores.'''
        x = obs_batch(obs, self.encoder_config)
        pg, _ = self.build_graph(x)
        v, omega, mean, log_var = pg.graph.forward(pg.action_v, pg.action_omega, pg.encoder.mean,
                                                   pg.encoder.log_var)
        kl = kl_unit_gaussian(LatentGaussian(mean=mean, log_var=log_var))
        return torch.cat([v, omega], dim=1), kl


def vib_loss(model: VibPolicy, obs: Tensor, actions: Tensor, beta: Optional[float] = None,
             generator: Optional[torch.Generator] = None) -> float:
    '''Mean over the batch of squared action error plus beta times the KL score.'''
    if generator is None:
        generator = torch.Generator()
        generator.manual_seed(0)
    batch = {'obs': torch.as_tensor(obs, dtype=DTYPE), 'action': torch.as_tensor(actions, dtype=DTYPE)}
    g, loss, _, _ = model.loss_graph(batch, generator, beta=beta)
    return g.forward(loss).item()


def train_policy(trajs: TrajectorySet,
                 config: TrainConfig = TrainConfig(),
                 encoder: EncoderConfig = EncoderConfig(),
                 tb_writer=None) -> Tuple[VibPolicy, List[EpochStats]]:
    '''Train a VIB policy on expert demonstrations; deterministic given
    ``config.seed``.'''
    if len(trajs) and tuple(trajs.obs_shape) != encoder.obs_shape():
        raise ValueError(f'Data observations {list(trajs.obs_shape)} do not match the encoder '
                         f'input {list(encoder.obs_shape())}')
    model = VibPolicy(encoder=encoder, beta=config.beta, seed=config.seed)
    history = train_model(model, trajs, config, tb_writer=tb_writer)
    return model, history


def policy_step(obs, model: VibPolicy, band: Optional[PredictionBand], t: int) -> PolicyStepResult:
    '''One control step: a single forward pass yields the action and the KL
    score; the Grad-CAM heatmap is computed only for frames flagged OOD.'''
    x = obs_batch(obs, model.encoder_config)
    if x.shape[0] != 1:
        raise ValueError('policy_step expects a single observation')
    pg, _ = model.build_graph(x)
    g = pg.graph
    v, omega, kl = g.forward(pg.action_v, pg.action_omega, pg.kl)
    action = ActionCmd(v=v.item(), omega=omega.item())
    score = kl.item()
    if band is None:
        return PolicyStepResult(action=action, score=score, is_ood=None, error='band missing')
    flagged = is_ood(score, t, band)
    heatmap = None
    if flagged:
        cfg = model.encoder_config
        heatmap = heatmaps_from_graph(g, pg.encoder, pg.kl, cfg.height, cfg.width)[0]
    return PolicyStepResult(action=action, score=score, is_ood=flagged, heatmap=heatmap)
