import pytest
import torch

from fare.autograd import DTYPE, OP_KINDS, Graph, ShapeError, same_pads

torch.manual_seed(20260101)

H = 1e-6


def check_gradients(build, shapes, seed=0, rtol=1e-4, atol=1e-8):
    gen = torch.Generator()
    gen.manual_seed(seed)
    g = Graph()
    leaves = [g.leaf(torch.randn(s, generator=gen, dtype=DTYPE)) for s in shapes]
    out = build(g, *leaves)
    g.forward(out)
    weights = g.leaf(torch.randn(g.value(out).shape, generator=gen, dtype=DTYPE))
    loss = g.reduce_sum(g.mul(out, weights))
    g.forward(loss)
    grads = g.backward(loss, wrt=leaves)

    for leaf in leaves:
        x0 = g.value(leaf).clone()
        fd = torch.zeros(x0.numel(), dtype=DTYPE)
        for i in range(x0.numel()):
            for sign in (1.0, -1.0):
                x = x0.clone()
                x.view(-1)[i] += sign * H
                g.bind(leaf, x)
                fd[i] += sign * g.forward(loss).item() / (2 * H)
        g.bind(leaf, x0)
        fd = fd.reshape(x0.shape)
        err = (grads[leaf] - fd).abs()
        assert (err <= rtol * torch.maximum(grads[leaf].abs(), fd.abs()) + atol).all(), (err.max(), leaf)


CASES = [
    ('conv2d_valid', lambda g, x, w, b: g.conv2d(x, w, b), [(2, 2, 5, 6), (3, 2, 3, 3), (3,)]),
    ('conv2d_same_stride2', lambda g, x, w, b: g.conv2d(x, w, b, stride=2, padding='same'),
     [(2, 2, 5, 6), (3, 2, 3, 3), (3,)]),
    ('conv2d_no_bias', lambda g, x, w: g.conv2d(x, w, stride=2, padding='same'), [(1, 1, 4, 4), (2, 1, 3, 3)]),
    ('conv_transpose2d', lambda g, x, w, b: g.conv_transpose2d(x, w, b, stride=2, padding=1),
     [(1, 2, 3, 3), (2, 3, 4, 4), (3,)]),
    ('linear', lambda g, x, w, b: g.linear(x, w, b), [(3, 4), (2, 4), (2,)]),
    ('relu', lambda g, x: g.relu(x), [(3, 4)]),
    ('reshape', lambda g, x: g.reshape(x, (6, 4)), [(2, 3, 4)]),
    ('add', lambda g, a, b: g.add(a, b), [(3, 4), (3, 4)]),
    ('sub', lambda g, a, b: g.sub(a, b), [(3, 4), (3, 4)]),
    ('mul', lambda g, a, b: g.mul(a, b), [(3, 4), (3, 4)]),
    ('mul_scalar', lambda g, x: g.mul_scalar(x, -2.5), [(3, 4)]),
    ('add_scalar', lambda g, x: g.add_scalar(x, 0.7), [(3, 4)]),
    ('reduce_sum', lambda g, x: g.reduce_sum(x), [(3, 4)]),
    ('mean', lambda g, x: g.mean(x), [(3, 4)]),
    ('softplus', lambda g, x: g.softplus(x), [(3, 4)]),
    ('exp', lambda g, x: g.exp(x), [(3, 4)]),
    ('sigmoid', lambda g, x: g.sigmoid(x), [(3, 4)]),
    ('tanh', lambda g, x: g.tanh(x), [(3, 4)]),
    ('clamp', lambda g, x: g.clamp(x, -0.5, 0.5), [(3, 4)]),
    ('select', lambda g, x: g.select(x, 2), [(3, 4)]),
    ('composite', lambda g, x, w: g.tanh(g.linear(g.relu(x), w)), [(2, 5), (3, 5)]),
]


@pytest.mark.parametrize('name, build, shapes', CASES, ids=[c[0] for c in CASES])
@pytest.mark.parametrize('seed', [0, 1, 2, 3])
def test_gradients_match_finite_differences(name, build, shapes, seed):
    check_gradients(build, shapes, seed=seed)


def test_every_op_kind_is_covered():
    covered = {'conv2d', 'conv_transpose2d', 'linear', 'relu', 'reshape', 'add', 'mul', 'mul_scalar',
               'add_scalar', 'reduce_sum', 'mean', 'softplus', 'exp', 'sigmoid', 'tanh', 'clamp', 'select'}
    assert set(OP_KINDS) == covered


def test_relu_forward_backward():
    g = Graph()
    x = g.leaf(torch.tensor([[-1.0, 2.0]]))
    y = g.reduce_sum(g.relu(x))
    assert torch.equal(g.forward(y), torch.tensor([2.0], dtype=DTYPE))
    assert torch.equal(g.backward(y, wrt=[x])[x], torch.tensor([[0.0, 1.0]], dtype=DTYPE))


def test_relu_gradient_at_zero_is_zero():
    g = Graph()
    x = g.leaf(torch.zeros(1, 3))
    y = g.reduce_sum(g.relu(x))
    g.forward(y)
    assert torch.equal(g.backward(y, wrt=[x])[x], torch.zeros(1, 3, dtype=DTYPE))


def test_clamp_gradient_outside_range_is_zero():
    g = Graph()
    x = g.leaf(torch.tensor([[-20.0, 0.0, 20.0]]))
    y = g.reduce_sum(g.clamp(x, -10.0, 10.0))
    assert g.forward(y).item() == 0.0
    assert torch.equal(g.backward(y, wrt=[x])[x], torch.tensor([[0.0, 1.0, 0.0]], dtype=DTYPE))


def test_backward_requires_scalar_root():
    g = Graph()
    x = g.leaf(torch.ones(2))
    y = g.mul_scalar(x, 2.0)
    g.forward(y)
    with pytest.raises(ShapeError):
        g.backward(y)


def test_shape_mismatch_names_node():
    g = Graph()
    a = g.leaf(torch.ones(2, 3))
    b = g.leaf(torch.ones(3, 2))
    c = g.add(a, b)
    with pytest.raises(ShapeError) as e:
        g.forward(c)
    assert e.value.node_id == c


def test_conv2d_channel_mismatch_raises():
    g = Graph()
    y = g.conv2d(g.leaf(torch.ones(1, 2, 4, 4)), g.leaf(torch.ones(3, 1, 3, 3)))
    with pytest.raises(ShapeError):
        g.forward(y)


def test_unbound_leaf_raises():
    g = Graph()
    x = g.leaf()
    y = g.reduce_sum(x)
    with pytest.raises(ValueError):
        g.forward(y)


def test_unreachable_leaf_gets_zero_gradient():
    g = Graph()
    x = g.leaf(torch.ones(2, 2))
    unused = g.leaf(torch.ones(3))
    y = g.reduce_sum(x)
    g.forward(y)
    grads = g.backward(y, wrt=[x, unused])
    assert torch.equal(grads[unused], torch.zeros(3, dtype=DTYPE))


def test_rebinding_leaves_reevaluates():
    g = Graph()
    x = g.leaf(torch.tensor([1.0]))
    y = g.mul(x, x)
    assert g.forward(y).item() == 1.0
    g.bind(x, torch.tensor([3.0]))
    assert g.forward(y).item() == 9.0


@pytest.mark.parametrize('size, expected', [(48, 24), (24, 12), (12, 6), (64, 32), (5, 3)])
def test_same_conv_output_size(size, expected):
    g = Graph()
    y = g.conv2d(g.leaf(torch.ones(1, 1, size, size)), g.leaf(torch.ones(1, 1, 3, 3)), stride=2, padding='same')
    assert tuple(g.forward(y).shape) == (1, 1, expected, expected)


@pytest.mark.parametrize('size, kernel, stride, expected', [(4, 3, 2, (0, 1)), (5, 3, 2, (1, 1)), (6, 3, 1, (1, 1))])
def test_same_pads(size, kernel, stride, expected):
    assert same_pads(size, kernel, stride) == expected


def test_shared_node_accumulates_gradient():
    g = Graph()
    x = g.leaf(torch.tensor([2.0]))
    y = g.add(g.mul(x, x), x)  # x^2 + x
    g.forward(y)
    assert g.backward(y, wrt=[x])[x].item() == pytest.approx(5.0)


def test_identity_convolution():
    x = torch.arange(12, dtype=DTYPE).reshape(1, 1, 3, 4)
    g = Graph()
    y = g.conv2d(g.leaf(x), g.leaf(torch.ones(1, 1, 1, 1)))
    assert torch.equal(g.forward(y), x)


def test_zero_linear_gives_bias():
    g = Graph()
    y = g.linear(g.leaf(torch.ones(2, 3)), g.leaf(torch.zeros(4, 3)), g.leaf(torch.arange(4.0)))
    assert torch.equal(g.forward(y), torch.arange(4.0, dtype=DTYPE).expand(2, 4))


def test_forward_several_roots_returns_each_output():
    g = Graph()
    x = g.leaf(torch.tensor([1.0, -2.0, 3.0]))
    r = g.relu(x)
    s = g.reduce_sum(r)
    t = g.mul_scalar(r, 2.0)
    out_s, out_t = g.forward(s, t)
    assert torch.equal(out_s, g.forward(s))
    assert torch.equal(out_t, g.forward(t))


def test_forward_evaluates_shared_ancestors_once(monkeypatch):
    import fare.autograd.graph as graph_module
    calls = []
    relu = graph_module._FORWARD['relu']

    def counting_relu(node, x):
        calls.append(node.id)
        return relu(node, x)

    monkeypatch.setitem(graph_module._FORWARD, 'relu', counting_relu)
    g = Graph()
    r = g.relu(g.leaf(torch.ones(2, 2)))
    g.forward(g.reduce_sum(r), g.mean(r), g.exp(r))
    assert calls == [r]


def test_forward_needs_a_root():
    with pytest.raises(ValueError):
        Graph().forward()


def small_net():
    gen = torch.Generator()
    gen.manual_seed(5)
    g = Graph()
    x = g.leaf(torch.randn(2, 1, 6, 6, generator=gen, dtype=DTYPE), name='x')
    w1 = g.leaf(torch.randn(3, 1, 3, 3, generator=gen, dtype=DTYPE), name='w1')
    w2 = g.leaf(torch.randn(4, 27, generator=gen, dtype=DTYPE), name='w2')
    h = g.relu(g.conv2d(x, w1, stride=2, padding='same'))
    out = g.tanh(g.linear(g.reshape(h, (2, 27)), w2))
    return g, [x, w1, w2], out


@pytest.mark.parametrize('a, b', [(1.0, 1.0), (2.0, -0.5), (0.0, 3.0)])
def test_backward_is_linear_in_the_root(a, b):
    g, leaves, out = small_net()
    first = g.reduce_sum(out)
    second = g.reduce_sum(g.mul(out, out))
    combined = g.add(g.mul_scalar(first, a), g.mul_scalar(second, b))
    g.forward(first, second, combined)
    grads_first = g.backward(first, wrt=leaves)
    grads_second = g.backward(second, wrt=leaves)
    grads = g.backward(combined, wrt=leaves)
    for leaf in leaves:
        assert torch.allclose(grads[leaf], a * grads_first[leaf] + b * grads_second[leaf], rtol=1e-10, atol=1e-12)


def test_forward_is_pure():
    g, leaves, out = small_net()
    inputs = [g.value(leaf).clone() for leaf in leaves]
    first = g.forward(out).clone()
    second = g.forward(out)
    assert torch.equal(first, second)
    for leaf, value in zip(leaves, inputs):
        assert torch.equal(g.value(leaf), value)

    other, _, other_out = small_net()
    assert torch.equal(other.forward(other_out), first)
