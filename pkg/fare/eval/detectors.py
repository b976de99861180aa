# Copyright (c)  2026  Fare authors
# Apache 2.0

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from fare.autograd import DTYPE
from fare.conformal.band import PredictionBand, chunk, fit_band
from fare.data.trajectories import TrajectorySet
from fare.models.autoencoder import ConvAutoencoder, ae_scores, vae_kl_scores
from fare.models.policy import VibPolicy
from fare.models.rnd import RandomNetworkDistillation, rnd_score
from fare.recognition.gradcam import grad_cam

METHODS = ('fare', 'ae', 'vae-r', 'vae-kl', 'rnd')
# methods whose detections come with a recognition heatmap
HEATMAP_METHODS = ('fare', 'ae', 'vae-r', 'vae-kl')
SCORE_NAMES = {'fare': 'kl', 'ae': 'mse', 'vae-r': 'mse', 'vae-kl': 'kl', 'rnd': 'novelty'}

BATCH_SIZE = 128


@dataclass
class FrameScores:
    scores: np.ndarray  # (L,)
    heatmaps: Optional[np.ndarray] = None  # (L, H, W)


class Detectors:
    '''OOD scorers of the policy and the baselines over frame sequences.

    RND scores (observation, action) pairs; the action is the policy's
    output on the same frame.
    '''

    def __init__(self,
                 policy: Optional[VibPolicy] = None,
                 ae: Optional[ConvAutoencoder] = None,
                 vae: Optional[ConvAutoencoder] = None,
                 rnd: Optional[RandomNetworkDistillation] = None):
        self.policy = policy
        self.ae = ae
        self.vae = vae
        self.rnd = rnd

    def check(self, methods: Sequence[str]) -> None:
        needs = {'fare': ('policy',), 'ae': ('ae',), 'vae-r': ('vae',), 'vae-kl': ('vae',), 'rnd': ('rnd', 'policy')}
        for method in methods:
            if method not in METHODS:
                raise ValueError(f'Unknown method: {method}, expected one of {METHODS}')
            for attr in needs[method]:
                if getattr(self, attr) is None:
                    raise ValueError(f'Method {method} needs {attr} weights')
        if self.ae is not None and self.ae.variational:
            raise ValueError('The ae weights are variational; pass them as vae')
        if self.vae is not None and not self.vae.variational:
            raise ValueError('The vae weights are not variational')

    def _score_batch(self, method: str, obs: torch.Tensor, with_heatmaps: bool):
        heatmaps = None
        if method == 'fare':
            _, scores = self.policy.act(obs)
            if with_heatmaps:
                heatmaps = grad_cam(self.policy.encoder_config, self.policy.params, obs)
        elif method in ('ae', 'vae-r'):
            model = self.ae if method == 'ae' else self.vae
            scores, heatmaps = ae_scores(obs, model)
        elif method == 'vae-kl':
            if with_heatmaps:
                scores, heatmaps = vae_kl_scores(obs, self.vae)
            else:
                scores = self.vae.kl_scores(obs)
        elif method == 'rnd':
            actions, _ = self.policy.act(obs)
            scores = rnd_score(obs, actions, self.rnd)
        else:
            raise ValueError(f'Unknown method: {method}')
        maps = None
        if with_heatmaps and heatmaps is not None:
            maps = torch.stack([h.values for h in heatmaps]).numpy().astype(np.float32)
        return scores.numpy(), maps

    def score(self, method: str, frames: np.ndarray, with_heatmaps: bool = True) -> FrameScores:
        '''Scores (and heatmaps for methods that have them) of a frame sequence.'''
        scores, maps = [], []
        for start in range(0, len(frames), BATCH_SIZE):
            obs = torch.as_tensor(frames[start:start + BATCH_SIZE], dtype=DTYPE)
            s, m = self._score_batch(method, obs, with_heatmaps and method in HEATMAP_METHODS)
            scores.append(s)
            if m is not None:
                maps.append(m)
        return FrameScores(scores=np.concatenate(scores) if scores else np.zeros(0),
                           heatmaps=np.concatenate(maps) if maps else None)


def calibration_scores(detectors: Detectors, method: str, trajs: TrajectorySet) -> List[np.ndarray]:
    '''Per-trajectory score sequences of a method on the calibration split.'''
    return [detectors.score(method, frames, with_heatmaps=False).scores for frames in trajs.frames]


def fit_method_band(detectors: Detectors, method: str, trajs: TrajectorySet, T: int, alpha: float,
                    split_fraction: float = 0.5) -> PredictionBand:
    segments = chunk(calibration_scores(detectors, method, trajs), T)
    logging.info(f'{method}: {len(segments)} calibration segments of {T + 1} frames')
    return fit_band(segments, alpha=alpha, split_fraction=split_fraction, score=SCORE_NAMES[method])


def fit_bands(detectors: Detectors, methods: Sequence[str], trajs: TrajectorySet, T: int, alpha: float,
              split_fraction: float = 0.5, fixed: Optional[Dict[str, PredictionBand]] = None
              ) -> Dict[str, PredictionBand]:
    '''One band per method on the same calibration split; bands in `fixed`
    are kept as given.'''
    bands = dict(fixed or {})
    for method in methods:
        if method not in bands:
            bands[method] = fit_method_band(detectors, method, trajs, T, alpha, split_fraction)
    return bands
