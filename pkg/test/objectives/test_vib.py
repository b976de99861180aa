import math

import pytest
import torch

from fare.autograd import DTYPE, Graph
from fare.objectives import LatentGaussian, kl_graph, kl_unit_gaussian, reparameterize_graph, sample_latent

torch.manual_seed(20260102)


def test_kl_standard_normal_is_zero():
    g = LatentGaussian(mean=torch.zeros(4, 3, dtype=DTYPE), log_var=torch.zeros(4, 3, dtype=DTYPE))
    assert torch.equal(kl_unit_gaussian(g), torch.zeros(4, dtype=DTYPE))


def test_kl_unit_mean_one_dim():
    g = LatentGaussian(mean=torch.tensor([1.0], dtype=DTYPE), log_var=torch.tensor([0.0], dtype=DTYPE))
    assert kl_unit_gaussian(g).item() == pytest.approx(0.5)


def test_kl_scalar_log_var():
    g = LatentGaussian(mean=torch.tensor([0.0], dtype=DTYPE), log_var=torch.tensor([math.log(2.0)], dtype=DTYPE))
    assert kl_unit_gaussian(g).item() == pytest.approx(0.5 * (1.0 - math.log(2.0)))


def test_kl_is_non_negative():
    gen = torch.Generator().manual_seed(0)
    mean = torch.randn(100, 8, generator=gen, dtype=DTYPE) * 3
    log_var = torch.randn(100, 8, generator=gen, dtype=DTYPE) * 3
    assert (kl_unit_gaussian(LatentGaussian(mean, log_var)) >= 0).all()


@pytest.mark.parametrize('seed', [0, 1, 2, 3, 4])
def test_kl_matches_monte_carlo(seed):
    gen = torch.Generator().manual_seed(seed)
    d = 4
    mean = torch.randn(d, generator=gen, dtype=DTYPE)
    log_var = torch.rand(d, generator=gen, dtype=DTYPE) * 2.0 - 1.0
    std = torch.exp(0.5 * log_var)
    z = mean + std * torch.randn(1_000_000, d, generator=gen, dtype=DTYPE)
    log_q = (-0.5 * ((z - mean) / std) ** 2 - torch.log(std)).sum(dim=1)
    log_p = (-0.5 * z ** 2).sum(dim=1)
    estimate = (log_q - log_p).mean().item()
    exact = kl_unit_gaussian(LatentGaussian(mean, log_var)).item()
    assert abs(estimate - exact) < 0.01 * exact + 3e-3


def test_kl_graph_matches_closed_form():
    gen = torch.Generator().manual_seed(1)
    mean = torch.randn(3, 5, generator=gen, dtype=DTYPE)
    log_var = torch.randn(3, 5, generator=gen, dtype=DTYPE)
    g = Graph()
    kl = kl_graph(g, g.leaf(mean), g.leaf(log_var), mean.numel())
    expected = kl_unit_gaussian(LatentGaussian(mean, log_var)).sum().item()
    assert g.forward(kl).item() == pytest.approx(expected)


def test_kl_graph_gradient():
    mean = torch.tensor([[0.5, -1.0]], dtype=DTYPE)
    log_var = torch.tensor([[0.2, -0.3]], dtype=DTYPE)
    g = Graph()
    m, lv = g.leaf(mean), g.leaf(log_var)
    kl = kl_graph(g, m, lv, 2)
    g.forward(kl)
    grads = g.backward(kl, wrt=[m, lv])
    assert torch.allclose(grads[m], mean)
    assert torch.allclose(grads[lv], 0.5 * (torch.exp(log_var) - 1.0))


def test_sample_latent_infer_returns_mean():
    g = LatentGaussian(mean=torch.tensor([[1.0, 2.0]], dtype=DTYPE), log_var=torch.zeros(1, 2, dtype=DTYPE))
    assert torch.equal(sample_latent(g), g.mean)


def test_sample_latent_with_tiny_variance_is_near_mean():
    mean = torch.randn(10_000, 2, dtype=DTYPE)
    g = LatentGaussian(mean=mean, log_var=torch.full((10_000, 2), -10.0, dtype=DTYPE))
    z = sample_latent(g, torch.Generator().manual_seed(0), mode='train')
    assert (z - mean).abs().mean().item() < 1e-2


def test_sample_latent_train_statistics():
    n = 200_000
    g = LatentGaussian(mean=torch.full((n, 1), 2.0, dtype=DTYPE),
                       log_var=torch.full((n, 1), math.log(4.0), dtype=DTYPE))
    z = sample_latent(g, torch.Generator().manual_seed(3), mode='train')
    assert z.mean().item() == pytest.approx(2.0, abs=0.02)
    assert z.std().item() == pytest.approx(2.0, abs=0.02)


def test_sample_latent_is_reproducible():
    g = LatentGaussian(mean=torch.zeros(5, 3, dtype=DTYPE), log_var=torch.zeros(5, 3, dtype=DTYPE))
    a = sample_latent(g, torch.Generator().manual_seed(7), mode='train')
    b = sample_latent(g, torch.Generator().manual_seed(7), mode='train')
    assert torch.equal(a, b)


def test_sample_latent_unknown_mode():
    g = LatentGaussian(mean=torch.zeros(1, 1, dtype=DTYPE), log_var=torch.zeros(1, 1, dtype=DTYPE))
    with pytest.raises(ValueError):
        sample_latent(g, mode='eval')


def test_latent_gaussian_rejects_bad_input():
    with pytest.raises(ValueError):
        LatentGaussian(mean=torch.zeros(2, 3), log_var=torch.zeros(2, 2))
    with pytest.raises(ValueError):
        LatentGaussian(mean=torch.zeros(1), log_var=torch.tensor([float('nan')]))


def test_reparameterize_graph():
    g = Graph()
    z = reparameterize_graph(g, g.leaf(torch.tensor([[1.0]])), g.leaf(torch.tensor([[math.log(9.0)]])),
                             g.leaf(torch.tensor([[2.0]])))
    assert g.forward(z).item() == pytest.approx(7.0)
