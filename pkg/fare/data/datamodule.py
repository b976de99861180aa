import argparse
import logging
from pathlib import Path
from typing import Optional

import torch
from torch.utils.data import DataLoader, TensorDataset

from fare.common import str2bool
from fare.data.trajectories import TrajectorySet, load_trajectories


def pairs_dataset(trajs: TrajectorySet) -> TensorDataset:
    '''All (obs, action) pairs of `trajs` as a float32 TensorDataset.'''
    obs, actions = trajs.stacked()
    return TensorDataset(torch.from_numpy(obs), torch.from_numpy(actions))


def pairs_dataloader(trajs: TrajectorySet,
                     batch_size: int,
                     shuffle: bool = True,
                     seed: int = 0) -> DataLoader:
    '''A DataLoader over (obs, action) pairs; with shuffle on, the order is a
    function of `seed` only.'''
    if batch_size < 1:
        raise ValueError(f'batch_size must be positive, got {batch_size}')
    generator = torch.Generator()
    generator.manual_seed(seed)
    return DataLoader(pairs_dataset(trajs), batch_size=batch_size, shuffle=shuffle,
                      generator=generator, num_workers=0)


class NavDataModule:
    """
    Contains dataset-related code: it reads the ``.ftraj`` demonstration files
    written by ``fare gen-data`` and creates the training DataLoader out of them.

    The calibration split is never batched: it is scored one trajectory at a
    time to keep the temporal order needed by the conformal band.
    """

    def __init__(self, args: argparse.Namespace):
        self.args = args

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        group = parser.add_argument_group(
            title='Navigation data related options',
            description='These options control where demonstrations are read '
                        'from and how they are batched.'
        )
        group.add_argument(
            '--data',
            type=Path,
            default=Path('exp/data/train.ftraj'),
            help='Path to the training trajectories.')
        group.add_argument(
            '--batch-size',
            type=int,
            default=64,
            help='Number of (observation, action) pairs in a minibatch.')
        group.add_argument(
            '--shuffle',
            type=str2bool,
            default=True,
            help='When enabled, pairs are shuffled every epoch with a seeded generator.')

    def train_trajectories(self) -> TrajectorySet:
        logging.info(f'About to get train trajectories from {self.args.data}')
        trajs = load_trajectories(self.args.data)
        logging.info(f'{len(trajs)} trajectories, {trajs.num_frames} pairs')
        return trajs

    def train_dataloader(self, seed: Optional[int] = None) -> DataLoader:
        seed = self.args.seed if seed is None else seed
        return pairs_dataloader(self.train_trajectories(), self.args.batch_size,
                                shuffle=self.args.shuffle, seed=seed)
