# Copyright (c)  2026  Fare authors
# Apache 2.0

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from fare.common import FormatError, Pathlike, read_container, write_container

TRAJ_MAGIC = b'FTRJ'
TRAJ_VERSION = 1


@dataclass
class TrajectorySet:
    '''Demonstration trajectories: per-step observations and expert actions.'''
    frames: List[np.ndarray] = field(default_factory=list)  # each (L, C, H, W), float32
    actions: List[np.ndarray] = field(default_factory=list)  # each (L, 2), float32
    seeds: List[int] = field(default_factory=list)
    layouts: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frames)

    def append(self, frames: np.ndarray, actions: np.ndarray, seed: int, layout: str) -> None:
        if len(frames) != len(actions):
            raise ValueError(f'{len(frames)} frames but {len(actions)} actions')
        if self.frames and frames.shape[1:] != self.frames[0].shape[1:]:
            raise ValueError(f'Frame shape {frames.shape[1:]} differs from {self.frames[0].shape[1:]}')
        self.frames.append(np.asarray(frames, dtype=np.float32))
        self.actions.append(np.asarray(actions, dtype=np.float32))
        self.seeds.append(int(seed))
        self.layouts.append(layout)

    @property
    def lengths(self) -> List[int]:
        return [len(f) for f in self.frames]

    @property
    def num_frames(self) -> int:
        return sum(self.lengths)

    @property
    def obs_shape(self) -> Tuple[int, int, int]:
        if not self.frames:
            raise ValueError('Empty trajectory set has no observation shape')
        return tuple(self.frames[0].shape[1:])

    def stacked(self) -> Tuple[np.ndarray, np.ndarray]:
        '''All (obs, action) pairs, trajectory-major.'''
        if not self.frames:
            return np.zeros((0, 1, 1, 1), dtype=np.float32), np.zeros((0, 2), dtype=np.float32)
        return np.concatenate(self.frames), np.concatenate(self.actions)


def save_trajectories(filename: Pathlike, trajs: TrajectorySet) -> None:
    c, h, w = trajs.obs_shape
    manifest = [
        ('version', str(TRAJ_VERSION)),
        ('C', str(c)), ('H', str(h)), ('W', str(w)),
        ('n_traj', str(len(trajs))),
        ('lengths', ','.join(str(n) for n in trajs.lengths)),
        ('seeds', ','.join(str(s) for s in trajs.seeds)),
        ('layouts', ','.join(trajs.layouts)),
    ]
    arrays = []
    for frames, actions in zip(trajs.frames, trajs.actions):
        arrays += [frames, actions]
    write_container(filename, TRAJ_MAGIC, manifest, arrays)
    logging.info(f'Wrote {len(trajs)} trajectories ({trajs.num_frames} frames) to {filename}')


def load_trajectories(filename: Pathlike) -> TrajectorySet:
    manifest, blob = read_container(filename, TRAJ_MAGIC)
    try:
        if int(manifest['version']) != TRAJ_VERSION:
            raise FormatError(f'{filename}: unsupported version {manifest["version"]}')
        c, h, w = int(manifest['C']), int(manifest['H']), int(manifest['W'])
        n = int(manifest['n_traj'])
        lengths = [int(x) for x in manifest['lengths'].split(',')] if n else []
        seeds = [int(x) for x in manifest['seeds'].split(',')] if n else []
        layouts = manifest['layouts'].split(',') if n else []
    except (KeyError, ValueError) as e:
        raise FormatError(f'{filename}: bad manifest ({e})') from e
    if not len(lengths) == len(seeds) == len(layouts) == n:
        raise FormatError(f'{filename}: manifest lists disagree with n_traj={n}')
    expected = sum(L * (c * h * w + 2) for L in lengths)
    if blob.size != expected:
        raise FormatError(f'{filename}: expected {expected} values, found {blob.size}')

    trajs = TrajectorySet()
    offset = 0
    for L, seed, layout in zip(lengths, seeds, layouts):
        frames = blob[offset:offset + L * c * h * w].reshape(L, c, h, w)
        offset += L * c * h * w
        actions = blob[offset:offset + 2 * L].reshape(L, 2)
        offset += 2 * L
        trajs.append(frames.copy(), actions.copy(), seed, layout)
    return trajs
