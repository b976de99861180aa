from collections import OrderedDict
from typing import Dict, Mapping, Optional, Tuple

import torch
from torch import Tensor
from torch.utils.tensorboard import SummaryWriter

from fare.autograd import Graph
from fare.common import Pathlike, save_checkpoint
from fare.training.diagnostics import measure_weight_norms


class NavModel:
    """
    NavModel specifies the common attributes/methods that
    will be exposed by all trainable networks in Fare (the policy and the
    baseline detectors). Think of it as of an interface class.

    Parameters live in an ordered name -> float64 tensor mapping; the order is
    the layer order of the ``.fwt`` file.
    """

    # The model-kind field of the weights manifest.
    kind: str

    params: 'OrderedDict[str, Tensor]'

    def hparams(self) -> Dict[str, object]:
        '''Hyper-parameters written to the weights manifest.'''
        raise NotImplementedError()

    def trainable(self) -> Tuple[str, ...]:
        '''Names of the parameters updated by the optimizer.'''
        return tuple(self.params)

    def loss_graph(self, batch: Mapping[str, Tensor],
                   generator: torch.Generator) -> Tuple[Graph, int, Dict[str, int], Dict[str, int]]:
        '''Build the training objective for a minibatch.

        Returns:
          The graph, the scalar loss node, the parameter leaf nodes by name and
          extra scalar nodes worth logging (e.g. ``{'kl': ...}``), all of them
          already divided by the batch size.
        '''
        raise NotImplementedError()

    def save(self, filename: Pathlike) -> None:
        save_checkpoint(filename, self.kind, self.params, self.hparams())

    def write_tensorboard_diagnostics(
            self,
            tb_writer: SummaryWriter,
            global_step: Optional[int] = None
    ):
        """
        Collect interesting diagnostic info about the model and write to to TensorBoard.

        :param tb_writer: a TensorBoard ``SummaryWriter`` instance.
        :param global_step: optional number of total training steps done so far.
        """
        tb_writer.add_scalars(
            'train/weight_l2_norms',
            measure_weight_norms(self.params, norm='l2'),
            global_step=global_step
        )
        tb_writer.add_scalars(
            'train/weight_max_norms',
            measure_weight_norms(self.params, norm='linf'),
            global_step=global_step
        )
