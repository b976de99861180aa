import numpy as np
import pytest
import torch

from fare.autograd import DTYPE
from fare.data import TrajectorySet
from fare.models import EncoderConfig
from fare.models.autoencoder import ConvAutoencoder, ae_scores, train_ae, vae_kl_scores
from fare.models.registry import load_model
from fare.training import TrainConfig

torch.manual_seed(20260104)

SMALL = EncoderConfig(height=16, width=16, conv_channels=(4, 8), latent_dim=4, variational=False)


def make_trajectories(n_traj=2, length=30, seed=0):
    rng = np.random.default_rng(seed)
    trajs = TrajectorySet()
    for i in range(n_traj):
        frames = rng.random((length, 1, 16, 16), dtype=np.float32)
        trajs.append(frames, np.zeros((length, 2), dtype=np.float32), seed=i, layout='corridor')
    return trajs


def test_reconstruction_shape_and_range():
    model = ConvAutoencoder(encoder=SMALL)
    recon = model.reconstruct(torch.rand(3, 1, 16, 16, dtype=DTYPE))
    assert recon.shape == (3, 1, 16, 16)
    assert ((recon > 0) & (recon < 1)).all()


def test_default_config_mirrors_input():
    model = ConvAutoencoder()
    assert model.kind == 'ae'
    assert model.reconstruct(torch.rand(1, 48, 64)).shape == (1, 1, 48, 64)


def test_input_must_be_multiple_of_stride():
    with pytest.raises(ValueError):
        ConvAutoencoder(encoder=EncoderConfig(height=18, width=16, conv_channels=(4, 8)))


def test_kind_follows_variational_flag():
    assert ConvAutoencoder(encoder=SMALL).kind == 'ae'
    vae = ConvAutoencoder(encoder=EncoderConfig(height=16, width=16, conv_channels=(4, 8), latent_dim=4))
    assert vae.kind == 'vae'


def test_ae_scores_match_reconstruction_error():
    model = ConvAutoencoder(encoder=SMALL)
    obs = torch.rand(2, 1, 16, 16, dtype=DTYPE)
    scores, heatmaps = ae_scores(obs, model)
    err = (obs - model.reconstruct(obs)) ** 2
    assert torch.allclose(scores, err.mean(dim=(1, 2, 3)))
    assert len(heatmaps) == 2
    assert heatmaps[0].shape == (16, 16)
    assert torch.allclose(heatmaps[1].values, err[1, 0])


def test_ae_scores_zero_for_exact_reconstruction():
    model = ConvAutoencoder(encoder=SMALL)
    # zero weights everywhere reconstruct every input as sigmoid(0)
    for name in model.params:
        model.params[name] = torch.zeros_like(model.params[name])
    obs = torch.full((1, 1, 16, 16), 0.5, dtype=DTYPE)
    scores, heatmaps = ae_scores(obs, model)
    assert scores.item() == 0.0
    assert heatmaps[0].values.sum().item() == 0.0


def test_vae_kl_scores_require_variational_weights():
    with pytest.raises(ValueError):
        vae_kl_scores(torch.rand(1, 1, 16, 16), ConvAutoencoder(encoder=SMALL))


def test_vae_kl_scores_and_heatmaps():
    vae = ConvAutoencoder(encoder=EncoderConfig(height=16, width=16, conv_channels=(4, 8), latent_dim=4))
    obs = torch.rand(3, 1, 16, 16, dtype=DTYPE)
    scores, heatmaps = vae_kl_scores(obs, vae)
    assert scores.shape == (3,)
    assert (scores >= 0).all()
    assert all(h.shape == (16, 16) and (h.values >= 0).all() for h in heatmaps)


def test_train_ae_reduces_loss():
    trajs = make_trajectories(n_traj=4, length=50)
    model, history = train_ae(trajs, variational=False, config=TrainConfig(epochs=4, lr=1e-2),
                              encoder=SMALL)
    assert model.kind == 'ae'
    assert history[-1].loss < history[0].loss
    assert history[0].kl == 0.0


def test_train_vae_logs_kl():
    trajs = make_trajectories(n_traj=1, length=20)
    model, history = train_ae(trajs, variational=True, config=TrainConfig(epochs=1, batch_size=8),
                              encoder=SMALL)
    assert model.kind == 'vae'
    assert history[0].kl > 0.0


def test_save_and_load(tmp_path):
    model = ConvAutoencoder(encoder=SMALL, seed=5)
    model.save(tmp_path / 'ae.fwt')
    loaded = load_model(tmp_path / 'ae.fwt')
    assert isinstance(loaded, ConvAutoencoder)
    assert loaded.kind == 'ae'
    assert torch.allclose(loaded.reconstruct(torch.ones(1, 1, 16, 16)),
                          model.reconstruct(torch.ones(1, 1, 16, 16)), atol=1e-5)
