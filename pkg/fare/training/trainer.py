# Copyright (c)  2026  Fare authors
# Apache 2.0

import csv
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional

import torch
from torch.utils.tensorboard import SummaryWriter

from fare.autograd import DTYPE, AdamState, adam_step, clip_grad_value
from fare.common import Pathlike
from fare.data.datamodule import pairs_dataloader
from fare.data.trajectories import TrajectorySet
from fare.training.diagnostics import measure_gradient_norms

if TYPE_CHECKING:
    from fare.models.interface import NavModel

# below this many (obs, action) pairs training still runs but is unreliable
MIN_RECOMMENDED_PAIRS = 1000


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    beta: float = 1e-3
    seed: int = 0
    clip_value: float = 5.0
    shuffle: bool = True


@dataclass
class EpochStats:
    epoch: int
    loss: float
    kl: float


def check_dataset(trajs: TrajectorySet) -> None:
    if trajs.num_frames == 0:
        raise ValueError('Cannot train on an empty dataset')
    if trajs.num_frames < MIN_RECOMMENDED_PAIRS:
        logging.warning(f'Only {trajs.num_frames} training pairs '
                        f'(at least {MIN_RECOMMENDED_PAIRS} recommended)')


def train_one_epoch(model: 'NavModel',
                    dataloader,
                    state: AdamState,
                    noise: torch.Generator,
                    config: TrainConfig,
                    current_epoch: int,
                    tb_writer: Optional[SummaryWriter] = None,
                    global_batch_idx: int = 0):
    """One epoch of training.

    Args:
        model: The model to train; its ``params`` are replaced after every batch
        dataloader: Yields (obs, action) float32 minibatches
        state: Adam moments carried across epochs
        noise: Generator for the reparameterization noise
        current_epoch: 0-based epoch index, for logging only

    Returns:
        A tuple (EpochStats, new Adam state, global batch index after this epoch).
    """
    total_loss, total_kl, total_pairs = 0., 0., 0
    trainable = model.trainable()
    for batch_idx, (obs, action) in enumerate(dataloader):
        batch = {'obs': obs.to(DTYPE), 'action': action.to(DTYPE)}
        n = obs.shape[0]
        g, loss, nodes, extras = model.loss_graph(batch, noise)
        if 'kl' in extras:
            loss_out, kl_out = g.forward(loss, extras['kl'])
            loss_value, kl_value = loss_out.item(), kl_out.item()
        else:
            loss_value, kl_value = g.forward(loss).item(), 0.0

        grads = g.backward(loss, wrt=[nodes[name] for name in trainable])
        grads = {name: grads[nodes[name]] for name in trainable}
        grads = clip_grad_value(grads, config.clip_value)
        new_params, state = adam_step({name: model.params[name] for name in trainable}, grads, state,
                                      lr=config.lr)
        model.params.update(new_params)

        total_loss += loss_value * n
        total_kl += kl_value * n
        total_pairs += n
        global_batch_idx += 1

        if batch_idx % 10 == 0:
            logging.info(
                'batch {}, epoch {}/{} '
                'average loss: {:.6f} over {} pairs, '
                'batch loss: {:.6f}, batch kl: {:.6f}'.format(
                    batch_idx, current_epoch, config.epochs,
                    total_loss / total_pairs, total_pairs,
                    loss_value, kl_value))
            if tb_writer is not None:
                tb_writer.add_scalar('train/loss', loss_value, global_batch_idx)
                tb_writer.add_scalar('train/kl', kl_value, global_batch_idx)
                tb_writer.add_scalars('train/grad_l1_norms', measure_gradient_norms(grads, norm='l1'),
                                      global_batch_idx)

    stats = EpochStats(epoch=current_epoch,
                       loss=total_loss / max(total_pairs, 1),
                       kl=total_kl / max(total_pairs, 1))
    return stats, state, global_batch_idx


def train_model(model: 'NavModel',
                trajs: TrajectorySet,
                config: TrainConfig = TrainConfig(),
                tb_writer: Optional[SummaryWriter] = None) -> List[EpochStats]:
    '''Minibatch Adam training of `model` on all (obs, action) pairs of `trajs`.

    The shuffling order and the reparameterization noise are driven by two
    generators seeded from ``config.seed``, so the final weights are a
    function of the initial weights, the data and the config only.
    ``epochs=0`` leaves the parameters untouched.
    '''
    check_dataset(trajs)
    dataloader = pairs_dataloader(trajs, config.batch_size, shuffle=config.shuffle, seed=config.seed)
    noise = torch.Generator()
    noise.manual_seed(config.seed + 1)

    state = AdamState()
    history = []
    global_batch_idx = 0
    for epoch in range(config.epochs):
        stats, state, global_batch_idx = train_one_epoch(model, dataloader, state, noise, config,
                                                         current_epoch=epoch, tb_writer=tb_writer,
                                                         global_batch_idx=global_batch_idx)
        logging.info(f'epoch {epoch}: average loss {stats.loss:.6f}, average kl {stats.kl:.6f}')
        if tb_writer is not None:
            tb_writer.add_scalar('train/epoch_loss', stats.loss, epoch)
            model.write_tensorboard_diagnostics(tb_writer, global_step=global_batch_idx)
        history.append(stats)
    return history


def write_loss_curve(filename: Pathlike, history: List[EpochStats]) -> None:
    with open(filename, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['epoch', 'loss', 'kl'])
        for stats in history:
            writer.writerow([stats.epoch, f'{stats.loss:.9g}', f'{stats.kl:.9g}'])
    logging.info(f'write loss curve to {filename}')
