import numpy as np
import pytest
import torch

from fare.autograd import DTYPE
from fare.data import TrajectorySet
from fare.models import EncoderConfig
from fare.models.registry import load_model
from fare.models.rnd import RandomNetworkDistillation, rnd_score, train_rnd
from fare.training import TrainConfig

torch.manual_seed(20260105)

SMALL = EncoderConfig(height=16, width=16)


def make_trajectories(n_traj=4, length=50, seed=0):
    rng = np.random.default_rng(seed)
    trajs = TrajectorySet()
    for i in range(n_traj):
        frames = rng.random((length, 1, 16, 16), dtype=np.float32) * 0.2
        actions = np.stack([np.full(length, 0.8), np.zeros(length)], axis=1).astype(np.float32)
        trajs.append(frames, actions, seed=i, layout='corridor')
    return trajs


def test_input_dim():
    assert RandomNetworkDistillation().input_dim == 12 * 16 + 2
    assert RandomNetworkDistillation(obs=SMALL).input_dim == 16 + 2


def test_features_pool_and_append_action():
    model = RandomNetworkDistillation(obs=SMALL)
    obs = torch.ones(2, 1, 16, 16, dtype=DTYPE)
    features = model.features(obs, torch.tensor([[0.3, -0.4], [1.0, 0.0]]))
    assert features.shape == (2, 18)
    assert torch.allclose(features[:, :16], torch.ones(2, 16, dtype=DTYPE))
    assert torch.allclose(features[0, 16:], torch.tensor([0.3, -0.4], dtype=DTYPE))


def test_score_is_non_negative():
    model = RandomNetworkDistillation(obs=SMALL)
    scores = rnd_score(torch.rand(5, 1, 16, 16), torch.rand(5, 2), model)
    assert scores.shape == (5,)
    assert (scores >= 0).all()


def test_only_predictor_is_trainable():
    model = RandomNetworkDistillation(obs=SMALL)
    assert model.trainable()
    assert all(name.startswith('predictor.') for name in model.trainable())


def test_training_keeps_target_frozen_and_reduces_error():
    trajs = make_trajectories()
    untrained = RandomNetworkDistillation(obs=SMALL, seed=0)
    model, history = train_rnd(trajs, TrainConfig(epochs=5, lr=1e-2), obs=SMALL)
    for name, p in untrained.params.items():
        if name.startswith('target.'):
            assert torch.equal(model.params[name], p), name
    assert history[-1].loss < history[0].loss

    obs = torch.as_tensor(trajs.frames[0], dtype=DTYPE)
    actions = torch.as_tensor(trajs.actions[0], dtype=DTYPE)
    assert rnd_score(obs, actions, model).mean() < rnd_score(obs, actions, untrained).mean()


def test_rejects_wrong_obs_shape():
    with pytest.raises(ValueError):
        rnd_score(torch.rand(1, 1, 48, 64), torch.rand(1, 2), RandomNetworkDistillation(obs=SMALL))


def test_save_and_load(tmp_path):
    model = RandomNetworkDistillation(obs=SMALL, hidden_dim=16, feature_dim=8, seed=1)
    model.save(tmp_path / 'rnd.fwt')
    loaded = load_model(tmp_path / 'rnd.fwt', expected_kind='rnd')
    assert loaded.input_dim == model.input_dim
    assert loaded.feature_dim == 8
    obs, actions = torch.rand(2, 1, 16, 16), torch.rand(2, 2)
    assert torch.allclose(rnd_score(obs, actions, loaded), rnd_score(obs, actions, model), rtol=1e-4, atol=1e-6)


def test_target_outputs_are_unchanged_by_training():
    trajs = make_trajectories(n_traj=2, length=20)
    obs = torch.as_tensor(trajs.frames[0], dtype=DTYPE)
    actions = torch.as_tensor(trajs.actions[0], dtype=DTYPE)
    untrained = RandomNetworkDistillation(obs=SMALL, seed=0)
    before = untrained.target_outputs(obs, actions)
    assert before.shape == (20, untrained.feature_dim)
    assert torch.equal(untrained.target_outputs(obs, actions), before)

    model, _ = train_rnd(trajs, TrainConfig(epochs=2, lr=1e-2), obs=SMALL)
    assert torch.equal(model.target_outputs(obs, actions), before)
