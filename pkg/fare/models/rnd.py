# Copyright (c)  2026  Fare authors
# Apache 2.0

from collections import OrderedDict
from typing import Dict, List, Mapping, Optional, Tuple

import torch
import torch.nn.functional as F
from torch import Tensor

from fare.autograd import DTYPE, Graph
from fare.data.trajectories import TrajectorySet
from fare.models.encoder import EncoderConfig, bind_params, obs_batch, uniform_init
from fare.models.interface import NavModel
from fare.objectives.vib import squared_error_graph
from fare.training.trainer import EpochStats, TrainConfig, train_model

POOL = 4


class RandomNetworkDistillation(NavModel):
    '''Novelty from the error of a trained predictor regressing the outputs
    of a frozen, randomly initialized target network.

    Both networks read the observation average-pooled by 4 in each direction,
    flattened and concatenated with the action (v, omega).
    '''
    kind = 'rnd'

    def __init__(self,
                 obs: EncoderConfig = EncoderConfig(),
                 hidden_dim: int = 64,
                 feature_dim: int = 32,
                 seed: int = 0,
                 params: Optional['OrderedDict[str, Tensor]'] = None):
        self.obs_config = obs
        self.hidden_dim = hidden_dim
        self.feature_dim = feature_dim
        self.seed = seed
        if params is None:
            generator = torch.Generator()
            generator.manual_seed(seed)
            params = OrderedDict()
            n_in = self.input_dim
            for net in ('target', 'predictor'):
                params[f'{net}.fc1.weight'] = uniform_init((hidden_dim, n_in), n_in, generator, gain=3.0 ** 0.5)
                params[f'{net}.fc1.bias'] = uniform_init((hidden_dim,), n_in, generator)
                params[f'{net}.fc2.weight'] = uniform_init((feature_dim, hidden_dim), hidden_dim, generator,
                                                           gain=3.0 ** 0.5)
                params[f'{net}.fc2.bias'] = torch.zeros(feature_dim, dtype=DTYPE)
        self.params = params

    @property
    def input_dim(self) -> int:
        c, h, w = self.obs_config.obs_shape()
        return c * (h // POOL) * (w // POOL) + 2

    def hparams(self) -> Dict[str, object]:
        c, h, w = self.obs_config.obs_shape()
        return {'C': c, 'H': h, 'W': w, 'hidden_dim': self.hidden_dim, 'feature_dim': self.feature_dim,
                'seed': self.seed}

    @classmethod
    def from_checkpoint(cls, manifest: Mapping[str, str], params) -> 'RandomNetworkDistillation':
        obs = EncoderConfig(channels=int(manifest['C']), height=int(manifest['H']), width=int(manifest['W']))
        return cls(obs=obs, hidden_dim=int(manifest['hidden_dim']), feature_dim=int(manifest['feature_dim']),
                   seed=int(manifest['seed']), params=params)

    def trainable(self) -> Tuple[str, ...]:
        return tuple(name for name in self.params if name.startswith('predictor.'))

    def features(self, obs, actions) -> Tensor:
        x = obs_batch(obs, self.obs_config)
        pooled = F.avg_pool2d(x, POOL).reshape(x.shape[0], -1)
        actions = torch.as_tensor(actions, dtype=DTYPE).reshape(x.shape[0], 2)
        return torch.cat([pooled, actions], dim=1)

    def _mlp(self, g: Graph, nodes: Mapping[str, int], net: str, x: int) -> int:
        h = g.relu(g.linear(x, nodes[f'{net}.fc1.weight'], nodes[f'{net}.fc1.bias']))
        return g.linear(h, nodes[f'{net}.fc2.weight'], nodes[f'{net}.fc2.bias'])

    def build_graph(self, features: Tensor) -> Tuple[Graph, Dict[str, int], int, int]:
        g = Graph()
        nodes = bind_params(g, self.params)
        x = g.leaf(features, name='features')
        return g, nodes, self._mlp(g, nodes, 'target', x), self._mlp(g, nodes, 'predictor', x)

    def loss_graph(self, batch: Mapping[str, Tensor], generator: torch.Generator):
        n = batch['obs'].shape[0]
        g, nodes, target, prediction = self.build_graph(self.features(batch['obs'], batch['action']))
        loss = g.mul_scalar(squared_error_graph(g, target, prediction), 1.0 / n)
        return g, loss, nodes, {}

    def target_outputs(self, obs, actions) -> Tensor:
        g, _, target, _ = self.build_graph(self.features(obs, actions))
        return g.forward(target)


def train_rnd(trajs: TrajectorySet,
              config: TrainConfig = TrainConfig(),
              obs: EncoderConfig = EncoderConfig(),
              tb_writer=None) -> Tuple[RandomNetworkDistillation, List[EpochStats]]:
    model = RandomNetworkDistillation(obs=obs, seed=config.seed)
    history = train_model(model, trajs, config, tb_writer=tb_writer)
    return model, history


def rnd_score(obs, actions, model: RandomNetworkDistillation) -> Tensor:
    '''Squared predictor error per (obs, action) pair, shape (N,).'''
    g, _, target, prediction = model.build_graph(model.features(obs, actions))
    target_out, predicted = g.forward(target, prediction)
    return ((target_out - predicted) ** 2).sum(dim=1)
