# Copyright (c)  2026  Fare authors
# Apache 2.0

"""
Split functional conformal prediction over per-frame OOD score trajectories.

Calibration trajectories are chunked into segments of T+1 scores. The first
part of the segments estimates the mean score curve mu_t, the rest gives the
per-segment maximal excursion above it, whose finite-sample (1 - alpha)
quantile is the band width w. A frame at step t is rejected as OOD when its
score lies strictly above mu[t mod (T+1)] + w.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from fare.common import FormatError, Pathlike

BAND_VERSION = 1


class InsufficientSegmentsError(ValueError):
    """Too few calibration segments to fit a band."""


@dataclass(frozen=True)
class ScoreSegment:
    scores: np.ndarray  # (T+1,)

    def __post_init__(self):
        if self.scores.ndim != 1 or not np.all(np.isfinite(self.scores)):
            raise ValueError('A score segment must be a finite 1-D array')

    def __len__(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class PredictionBand:
    mu: np.ndarray  # (T+1,)
    w: float
    alpha: float
    T: int
    n_mu: int
    n_w: int
    score: str = 'kl'

    def __post_init__(self):
        if len(self.mu) != self.T + 1:
            raise ValueError(f'Band has {len(self.mu)} means, expected T+1={self.T + 1}')
        if self.w < 0:
            raise ValueError(f'Band width must be non-negative, got {self.w}')

    def upper(self, t: int) -> float:
        '''Upper bound at frame `t` counted from the episode start.'''
        return float(self.mu[t % (self.T + 1)]) + self.w


def chunk(trajectory_scores: Iterable[Sequence[float]], T: int) -> List[ScoreSegment]:
    '''Cut every trajectory into consecutive non-overlapping windows of T+1
    scores; a trailing remainder shorter than a window is dropped.'''
    if T < 1:
        raise ValueError(f'T must be at least 1, got {T}')
    segments = []
    for scores in trajectory_scores:
        scores = np.asarray(scores, dtype=np.float64)
        for i in range(len(scores) // (T + 1)):
            segments.append(ScoreSegment(scores[i * (T + 1):(i + 1) * (T + 1)].copy()))
    return segments


def conformal_quantile(values: Sequence[float], alpha: float) -> float:
    '''The ceil((n+1)(1-alpha))-th smallest value, clamped to the maximum.'''
    s = np.sort(np.asarray(values, dtype=np.float64))
    n = len(s)
    # the epsilon keeps exact products such as 3 * 0.5 from rounding up
    k = math.ceil((n + 1) * (1.0 - alpha) - 1e-9)
    k = min(max(k, 1), n)
    return float(s[k - 1])


def fit_band(segments: Sequence[ScoreSegment],
             alpha: float = 0.05,
             split_fraction: float = 0.5,
             score: str = 'kl') -> PredictionBand:
    '''Fit a one-sided band on calibration segments.

    The first ``round(n * split_fraction)`` segments estimate the mean curve,
    the remaining ones the width.

    Raises:
      InsufficientSegmentsError: if either split has fewer than 2 segments.
    '''
    if not 0.0 < alpha < 1.0:
        raise ValueError(f'alpha must be in (0, 1), got {alpha}')
    if not 0.0 < split_fraction < 1.0:
        raise ValueError(f'split_fraction must be in (0, 1), got {split_fraction}')
    n = len(segments)
    n_mu = int(round(n * split_fraction))
    n_w = n - n_mu
    if n_mu < 2 or n_w < 2:
        raise InsufficientSegmentsError(
            f'insufficient segments: {n} segments give splits of {n_mu} and {n_w}, need at least 2 each')
    lengths = {len(s) for s in segments}
    if len(lengths) != 1:
        raise ValueError(f'Segments have different lengths: {sorted(lengths)}')
    T = lengths.pop() - 1

    scores = np.stack([s.scores for s in segments])
    mu = scores[:n_mu].mean(axis=0)
    deviations = (scores[n_mu:] - mu).max(axis=1)
    w = max(conformal_quantile(deviations, alpha), 0.0)
    logging.info(f'Fitted {score} band: T={T}, alpha={alpha}, n_mu={n_mu}, n_w={n_w}, w={w:.6g}')
    return PredictionBand(mu=mu, w=w, alpha=alpha, T=T, n_mu=n_mu, n_w=n_w, score=score)


def is_ood(score: float, t: int, band: PredictionBand) -> bool:
    '''Whether `score` at frame `t` lies strictly above the band.'''
    return bool(score > band.upper(t))


def coverage(segments: Sequence[ScoreSegment], band: PredictionBand) -> float:
    '''Fraction of segments whose scores all stay inside the band.'''
    if not segments:
        raise ValueError('coverage() needs at least one segment')
    bound = band.mu + band.w
    inside = [bool(np.all(s.scores <= bound)) for s in segments]
    return float(np.mean(inside))


def save_band(filename: Pathlike, band: PredictionBand) -> None:
    lines = [
        f'version={BAND_VERSION}',
        f'score={band.score}',
        f'alpha={band.alpha!r}',
        f'T={band.T}',
        f'w={band.w:.17g}',
        f'n_mu={band.n_mu}',
        f'n_w={band.n_w}',
    ]
    lines += [f'{m:.17g}' for m in band.mu]
    Path(filename).write_text('\n'.join(lines) + '\n')
    logging.info(f'write band to {filename}')


def load_band(filename: Pathlike) -> PredictionBand:
    filename = Path(filename)
    if not filename.is_file():
        raise FileNotFoundError(f'No such file: {filename}')
    manifest, mu = {}, []
    try:
        for line in filename.read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            key, sep, value = line.partition('=')
            if sep:
                manifest[key] = value
            else:
                mu.append(float(line))
        if int(manifest['version']) != BAND_VERSION:
            raise FormatError(f'{filename}: unsupported version {manifest["version"]}')
        return PredictionBand(mu=np.array(mu),
                              w=float(manifest['w']),
                              alpha=float(manifest['alpha']),
                              T=int(manifest['T']),
                              n_mu=int(manifest['n_mu']),
                              n_w=int(manifest['n_w']),
                              score=manifest.get('score', 'kl'))
    except (KeyError, ValueError, UnicodeDecodeError) as e:
        if isinstance(e, FormatError):
            raise
        raise FormatError(f'{filename}: bad band file ({e})') from e
