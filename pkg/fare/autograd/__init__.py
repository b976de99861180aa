from .graph import DTYPE, OP_KINDS, ComputeNode, Graph, ShapeError, as_tensor, same_pads
from .optim import AdamState, adam_step, clip_grad_value
