# Copyright (c)  2026  Fare authors
# Apache 2.0

"""
A small reverse-mode automatic differentiation engine over float64 torch
tensors.

A :class:`Graph` records operations as :class:`ComputeNode` instances that are
only evaluated when :meth:`Graph.forward` is called, so leaves can be bound
after the graph is built. Node ids are assigned in creation order, which is
also a topological order because a node can only consume existing nodes.

The numerical kernels (convolutions and their adjoints) come from torch; the
graph bookkeeping and the gradient rules live here so that gradients can be
queried for any node, including intermediate feature maps.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import torch
import torch.nn.functional as F
from torch import Tensor

DTYPE = torch.float64

Padding = str  # 'valid' or 'same'


class ShapeError(ValueError):
    """Raised when an op receives inputs of incompatible shapes."""

    def __init__(self, node_id: int, message: str):
        super().__init__(f'node {node_id}: {message}')
        self.node_id = node_id


@dataclass
class ComputeNode:
    id: int
    op: str
    inputs: Tuple[int, ...]
    attrs: Dict[str, Any] = field(default_factory=dict)
    name: Optional[str] = None
    output: Optional[Tensor] = None
    grad: Optional[Tensor] = None
    # per-evaluation values needed by the backward rule (e.g. padded inputs)
    ctx: Dict[str, Tensor] = field(default_factory=dict)


def as_tensor(value: Any) -> Tensor:
    return torch.as_tensor(value, dtype=DTYPE)


def same_pads(size: int, kernel_size: int, stride: int) -> Tuple[int, int]:
    '''Return (before, after) padding so that the output has ceil(size/stride)
    elements, the convention of "same" convolutions with stride.'''
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel_size - size, 0)
    return total // 2, total - total // 2


class Graph:
    '''A lazily evaluated computation graph.

    Example::

        >>> g = Graph()
        >>> x = g.leaf(torch.tensor([[-1., 2.]]))
        >>> y = g.reduce_sum(g.relu(x))
        >>> g.forward(y)
        tensor([2.], dtype=torch.float64)
        >>> g.backward(y, wrt=[x])[x]
        tensor([[0., 1.]], dtype=torch.float64)
    '''

    def __init__(self):
        self.nodes: List[ComputeNode] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _add(self, op: str, inputs: Sequence[int], name: Optional[str] = None, **attrs) -> int:
        for i in inputs:
            if not 0 <= i < len(self.nodes):
                raise ValueError(f'Unknown input node {i} for op {op}')
        node = ComputeNode(id=len(self.nodes), op=op, inputs=tuple(inputs), attrs=attrs, name=name)
        self.nodes.append(node)
        return node.id

    # ------------------------------------------------------------------
    # graph construction

    def leaf(self, value: Optional[Any] = None, name: Optional[str] = None) -> int:
        node_id = self._add('leaf', (), name=name)
        if value is not None:
            self.bind(node_id, value)
        return node_id

    def bind(self, node_id: int, value: Any) -> None:
        node = self.nodes[node_id]
        if node.op != 'leaf':
            raise ValueError(f'node {node_id} is not a leaf (op={node.op})')
        node.output = as_tensor(value)

    def conv2d(self, x: int, weight: int, bias: Optional[int] = None,
               stride: int = 1, padding: Padding = 'valid') -> int:
        if padding not in ('valid', 'same'):
            raise ValueError(f'Unsupported padding: {padding}')
        inputs = (x, weight) if bias is None else (x, weight, bias)
        return self._add('conv2d', inputs, stride=stride, padding=padding)

    def conv_transpose2d(self, x: int, weight: int, bias: Optional[int] = None,
                         stride: int = 1, padding: int = 0) -> int:
        inputs = (x, weight) if bias is None else (x, weight, bias)
        return self._add('conv_transpose2d', inputs, stride=stride, padding=padding)

    def linear(self, x: int, weight: int, bias: Optional[int] = None) -> int:
        inputs = (x, weight) if bias is None else (x, weight, bias)
        return self._add('linear', inputs)

    def relu(self, x: int) -> int:
        return self._add('relu', (x,))

    def reshape(self, x: int, shape: Sequence[int]) -> int:
        return self._add('reshape', (x,), shape=tuple(shape))

    def add(self, a: int, b: int) -> int:
        return self._add('add', (a, b))

    def mul(self, a: int, b: int) -> int:
        return self._add('mul', (a, b))

    def mul_scalar(self, x: int, scalar: float) -> int:
        return self._add('mul_scalar', (x,), scalar=float(scalar))

    def add_scalar(self, x: int, scalar: float) -> int:
        return self._add('add_scalar', (x,), scalar=float(scalar))

    def reduce_sum(self, x: int) -> int:
        return self._add('reduce_sum', (x,))

    def mean(self, x: int) -> int:
        return self._add('mean', (x,))

    def softplus(self, x: int) -> int:
        return self._add('softplus', (x,))

    def exp(self, x: int) -> int:
        return self._add('exp', (x,))

    def sigmoid(self, x: int) -> int:
        return self._add('sigmoid', (x,))

    def tanh(self, x: int) -> int:
        return self._add('tanh', (x,))

    def clamp(self, x: int, min_value: float, max_value: float) -> int:
        if min_value > max_value:
            raise ValueError(f'clamp: min {min_value} > max {max_value}')
        return self._add('clamp', (x,), min_value=float(min_value), max_value=float(max_value))

    def select(self, x: int, column: int) -> int:
        '''Column `column` of a 2-D tensor, kept 2-D with shape [N, 1].'''
        return self._add('select', (x,), column=int(column))

    def sub(self, a: int, b: int) -> int:
        return self.add(a, self.mul_scalar(b, -1.0))

    # ------------------------------------------------------------------
    # evaluation

    def _ancestors(self, *roots: int) -> List[int]:
        seen = set()
        stack = list(roots)
        while stack:
            i = stack.pop()
            if i in seen:
                continue
            seen.add(i)
            stack.extend(self.nodes[i].inputs)
        return sorted(seen)

    def forward(self, *roots: int) -> Union[Tensor, Tuple[Tensor, ...]]:
        '''Evaluate every node the `roots` depend on, each exactly once, and
        return the root outputs (a single tensor for a single root).
        Cached outputs are overwritten, so repeated calls see rebound leaves.'''
        if not roots:
            raise ValueError('forward() needs at least one root')
        for i in self._ancestors(*roots):
            node = self.nodes[i]
            if node.op == 'leaf':
                if node.output is None:
                    raise ValueError(f'Leaf node {i} ({node.name}) is not bound')
                continue
            args = [self.nodes[j].output for j in node.inputs]
            node.ctx = {}
            node.output = _FORWARD[node.op](node, *args)
            node.grad = None
        if len(roots) == 1:
            return self.nodes[roots[0]].output
        return tuple(self.nodes[r].output for r in roots)

    def backward(self, root: int, wrt: Optional[Iterable[int]] = None) -> Dict[int, Tensor]:
        '''Gradients of the scalar `root` w.r.t. the nodes in `wrt`
        (all leaves if None). Nodes the root does not depend on get zeros.'''
        root_node = self.nodes[root]
        if root_node.output is None:
            raise RuntimeError(f'forward() has not been run for node {root}')
        if tuple(root_node.output.shape) != (1,):
            raise ShapeError(root, f'backward root must have shape [1], got {list(root_node.output.shape)}')

        order = self._ancestors(root)
        grads: Dict[int, Tensor] = {root: torch.ones(1, dtype=DTYPE)}
        for i in reversed(order):
            node = self.nodes[i]
            gy = grads.get(i)
            node.grad = gy
            if gy is None or node.op == 'leaf':
                continue
            args = [self.nodes[j].output for j in node.inputs]
            input_grads = _BACKWARD[node.op](node, gy, *args)
            for j, g in zip(node.inputs, input_grads):
                if g is None:
                    continue
                grads[j] = g if j not in grads else grads[j] + g

        if wrt is None:
            wrt = [n.id for n in self.nodes if n.op == 'leaf']
        ans = {}
        for j in wrt:
            if j in grads:
                ans[j] = grads[j]
            else:
                out = self.nodes[j].output
                ans[j] = torch.zeros_like(out) if out is not None else None
        return ans

    def value(self, node_id: int) -> Tensor:
        return self.nodes[node_id].output


# ----------------------------------------------------------------------
# forward rules


def _check_same_shape(node: ComputeNode, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(node.id, f'{node.op}: shapes {list(a.shape)} and {list(b.shape)} differ')


def _conv2d_fwd(node, x, w, b=None):
    if x.dim() != 4 or w.dim() != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(node.id, f'conv2d: input {list(x.shape)} incompatible with weight {list(w.shape)}')
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(node.id, f'conv2d: bias {list(b.shape)} does not match {w.shape[0]} out channels')
    stride = node.attrs['stride']
    k_h, k_w = w.shape[2], w.shape[3]
    if node.attrs['padding'] == 'same':
        top, bottom = same_pads(x.shape[2], k_h, stride)
        left, right = same_pads(x.shape[3], k_w, stride)
    else:
        top = bottom = left = right = 0
    xp = F.pad(x, (left, right, top, bottom))
    if xp.shape[2] < k_h or xp.shape[3] < k_w:
        raise ShapeError(node.id, f'conv2d: input {list(x.shape)} smaller than kernel {k_h}x{k_w}')
    node.ctx['xp'] = xp
    node.ctx['offset'] = (top, left)
    return F.conv2d(xp, w, b, stride=stride)


def _conv_transpose2d_fwd(node, x, w, b=None):
    if x.dim() != 4 or w.dim() != 4 or x.shape[1] != w.shape[0]:
        raise ShapeError(node.id, f'conv_transpose2d: input {list(x.shape)} incompatible with weight {list(w.shape)}')
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(node.id, f'conv_transpose2d: bias {list(b.shape)} does not match {w.shape[1]} out channels')
    return F.conv_transpose2d(x, w, b, stride=node.attrs['stride'], padding=node.attrs['padding'])


def _linear_fwd(node, x, w, b=None):
    if x.dim() != 2 or w.dim() != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(node.id, f'linear: input {list(x.shape)} incompatible with weight {list(w.shape)}')
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(node.id, f'linear: bias {list(b.shape)} does not match {w.shape[0]} outputs')
    y = x @ w.t()
    return y if b is None else y + b


def _reshape_fwd(node, x):
    shape = node.attrs['shape']
    try:
        return x.reshape(shape)
    except RuntimeError:
        raise ShapeError(node.id, f'reshape: cannot view {list(x.shape)} as {list(shape)}')


def _add_fwd(node, a, b):
    _check_same_shape(node, a, b)
    return a + b


def _mul_fwd(node, a, b):
    _check_same_shape(node, a, b)
    return a * b


def _select_fwd(node, x):
    column = node.attrs['column']
    if x.dim() != 2 or not 0 <= column < x.shape[1]:
        raise ShapeError(node.id, f'select: column {column} out of range for {list(x.shape)}')
    return x[:, column:column + 1].clone()


_FORWARD: Dict[str, Callable[..., Tensor]] = {
    'conv2d': _conv2d_fwd,
    'conv_transpose2d': _conv_transpose2d_fwd,
    'linear': _linear_fwd,
    'relu': lambda node, x: x.clamp_min(0.0),
    'reshape': _reshape_fwd,
    'add': _add_fwd,
    'mul': _mul_fwd,
    'mul_scalar': lambda node, x: x * node.attrs['scalar'],
    'add_scalar': lambda node, x: x + node.attrs['scalar'],
    'reduce_sum': lambda node, x: x.sum().reshape(1),
    'mean': lambda node, x: x.mean().reshape(1),
    'softplus': lambda node, x: F.softplus(x),
    'exp': lambda node, x: torch.exp(x),
    'sigmoid': lambda node, x: torch.sigmoid(x),
    'tanh': lambda node, x: torch.tanh(x),
    'clamp': lambda node, x: x.clamp(node.attrs['min_value'], node.attrs['max_value']),
    'select': _select_fwd,
}

# ----------------------------------------------------------------------
# backward rules: each returns one gradient (or None) per input

GradList = List[Optional[Tensor]]


def _conv2d_bwd(node, gy, x, w, b=None) -> GradList:
    stride = node.attrs['stride']
    xp = node.ctx['xp']
    top, left = node.ctx['offset']
    gxp = torch.nn.grad.conv2d_input(xp.shape, w, gy, stride=stride)
    gx = gxp[:, :, top:top + x.shape[2], left:left + x.shape[3]]
    gw = torch.nn.grad.conv2d_weight(xp, w.shape, gy, stride=stride)
    grads = [gx, gw]
    if b is not None:
        grads.append(gy.sum(dim=(0, 2, 3)))
    return grads


def _conv_transpose2d_bwd(node, gy, x, w, b=None) -> GradList:
    stride, padding = node.attrs['stride'], node.attrs['padding']
    # conv_transpose2d is the adjoint of conv2d w.r.t. its input
    gx = F.conv2d(gy, w, None, stride=stride, padding=padding)
    gw = torch.nn.grad.conv2d_weight(gy, w.shape, x, stride=stride, padding=padding)
    grads = [gx, gw]
    if b is not None:
        grads.append(gy.sum(dim=(0, 2, 3)))
    return grads


def _linear_bwd(node, gy, x, w, b=None) -> GradList:
    grads = [gy @ w, gy.t() @ x]
    if b is not None:
        grads.append(gy.sum(dim=0))
    return grads


def _select_bwd(node, gy, x) -> GradList:
    gx = torch.zeros_like(x)
    column = node.attrs['column']
    gx[:, column:column + 1] = gy
    return [gx]


def _clamp_bwd(node, gy, x) -> GradList:
    inside = (x >= node.attrs['min_value']) & (x <= node.attrs['max_value'])
    return [gy * inside.to(DTYPE)]


_BACKWARD: Dict[str, Callable[..., GradList]] = {
    'conv2d': _conv2d_bwd,
    'conv_transpose2d': _conv_transpose2d_bwd,
    'linear': _linear_bwd,
    # subgradient at exactly 0 is 0
    'relu': lambda node, gy, x: [gy * (x > 0).to(DTYPE)],
    'reshape': lambda node, gy, x: [gy.reshape(x.shape)],
    'add': lambda node, gy, a, b: [gy, gy],
    'mul': lambda node, gy, a, b: [gy * b, gy * a],
    'mul_scalar': lambda node, gy, x: [gy * node.attrs['scalar']],
    'add_scalar': lambda node, gy, x: [gy],
    'reduce_sum': lambda node, gy, x: [gy.reshape(()) * torch.ones_like(x)],
    'mean': lambda node, gy, x: [gy.reshape(()) * torch.ones_like(x) / x.numel()],
    'softplus': lambda node, gy, x: [gy * torch.sigmoid(x)],
    'exp': lambda node, gy, x: [gy * node.output],
    'sigmoid': lambda node, gy, x: [gy * node.output * (1.0 - node.output)],
    'tanh': lambda node, gy, x: [gy * (1.0 - node.output * node.output)],
    'clamp': _clamp_bwd,
    'select': _select_bwd,
}

OP_KINDS = tuple(sorted(_FORWARD))
