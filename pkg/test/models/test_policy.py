import numpy as np
import pytest
import torch

from fare.autograd import DTYPE
from fare.conformal import PredictionBand, chunk, fit_band, is_ood
from fare.data import TrajectorySet
from fare.models import EncoderConfig
from fare.models.policy import VibPolicy, policy_step, train_policy, vib_loss
from fare.models.registry import load_model
from fare.recognition import grad_cam
from fare.sim import CollectConfig, SimConfig, collect_dataset
from fare.training import TrainConfig

torch.manual_seed(20260103)

SMALL = EncoderConfig(height=16, width=16, conv_channels=(4, 8), latent_dim=4)


def make_trajectories(n_traj=4, length=50, seed=0, config=SMALL):
    '''Random images whose expert turns toward the brighter half.'''
    rng = np.random.default_rng(seed)
    trajs = TrajectorySet()
    c, h, w = config.obs_shape()
    for i in range(n_traj):
        frames = rng.random((length, c, h, w), dtype=np.float32)
        diff = frames[:, 0, :, :w // 2].mean(axis=(1, 2)) - frames[:, 0, :, w // 2:].mean(axis=(1, 2))
        actions = np.stack([np.full(length, 0.8), np.tanh(20.0 * diff)], axis=1).astype(np.float32)
        trajs.append(frames, actions, seed=i, layout='corridor')
    return trajs


def zero_params(model):
    for name in model.params:
        model.params[name] = torch.zeros_like(model.params[name])
    return model


def test_default_feature_maps_are_at_least_6x8():
    k, h, w = EncoderConfig().feature_shape()
    assert (h, w) == (6, 8)
    assert k == 32


def test_encode_shapes():
    model = VibPolicy()
    obs = torch.rand(3, 1, 48, 64, dtype=DTYPE)
    posterior, feature_maps = model.encode(obs)
    assert posterior.mean.shape == (3, 32)
    assert posterior.log_var.shape == (3, 32)
    assert feature_maps.shape == (3, 32, 6, 8)
    assert (feature_maps >= 0).all()


def test_encode_single_observation():
    model = VibPolicy(encoder=SMALL)
    posterior, _ = model.encode(torch.rand(1, 16, 16))
    assert posterior.mean.shape == (1, 4)


def test_encode_wrong_shape_raises():
    model = VibPolicy(encoder=SMALL)
    with pytest.raises(ValueError):
        model.encode(torch.rand(1, 1, 15, 16))


def test_zero_weights_give_prior_and_neutral_action():
    model = zero_params(VibPolicy(encoder=SMALL))
    obs = torch.rand(2, 1, 16, 16, dtype=DTYPE)
    posterior, _ = model.encode(obs)
    assert torch.equal(posterior.mean, torch.zeros(2, 4, dtype=DTYPE))
    assert torch.equal(posterior.log_var, torch.zeros(2, 4, dtype=DTYPE))
    assert torch.equal(model.scores(obs), torch.zeros(2, dtype=DTYPE))
    action = model.decode_action(torch.randn(4, dtype=DTYPE))
    assert action.v == pytest.approx(0.5)
    assert action.omega == pytest.approx(0.0)


def test_decode_action_ranges():
    model = VibPolicy(encoder=SMALL)
    actions = model.decode_actions(torch.randn(100, 4, dtype=DTYPE) * 10)
    assert ((actions[:, 0] >= 0) & (actions[:, 0] <= 1)).all()
    assert ((actions[:, 1] >= -1) & (actions[:, 1] <= 1)).all()


def test_decode_wrong_latent_dim():
    model = VibPolicy(encoder=SMALL)
    with pytest.raises(ValueError):
        model.decode_actions(torch.zeros(1, 5))


def test_act_matches_encode_and_decode():
    model = VibPolicy(encoder=SMALL)
    obs = torch.rand(3, 1, 16, 16, dtype=DTYPE)
    actions, kl = model.act(obs)
    posterior, _ = model.encode(obs)
    assert torch.allclose(actions, model.decode_actions(posterior.mean))
    assert torch.allclose(kl, model.scores(obs))


def test_vib_loss_is_zero_for_perfect_decoder_and_prior_posterior():
    model = zero_params(VibPolicy(encoder=SMALL))
    obs = torch.rand(5, 1, 16, 16, dtype=DTYPE)
    actions = torch.tensor([[0.5, 0.0]] * 5, dtype=DTYPE)
    assert vib_loss(model, obs, actions, beta=1.0) == pytest.approx(0.0, abs=1e-12)


def test_vib_loss_without_kl_is_mean_squared_error():
    model = VibPolicy(encoder=SMALL)
    obs = torch.rand(4, 1, 16, 16, dtype=DTYPE)
    actions = torch.rand(4, 2, dtype=DTYPE)
    loss = vib_loss(model, obs, actions, beta=0.0, generator=torch.Generator().manual_seed(5))

    eps = torch.randn((4, 4), generator=torch.Generator().manual_seed(5), dtype=DTYPE)
    posterior, _ = model.encode(obs)
    z = posterior.mean + torch.exp(0.5 * posterior.log_var) * eps
    expected = ((actions - model.decode_actions(z)) ** 2).sum().item() / 4
    assert loss == pytest.approx(expected, rel=1e-10)


def test_vib_loss_adds_weighted_kl():
    model = VibPolicy(encoder=SMALL)
    obs = torch.rand(4, 1, 16, 16, dtype=DTYPE)
    actions = torch.rand(4, 2, dtype=DTYPE)
    base = vib_loss(model, obs, actions, beta=0.0)
    with_kl = vib_loss(model, obs, actions, beta=2.0)
    assert with_kl - base == pytest.approx(2.0 * model.scores(obs).mean().item(), rel=1e-8)


def test_vib_loss_empty_batch():
    model = VibPolicy(encoder=SMALL)
    with pytest.raises(ValueError):
        vib_loss(model, torch.zeros(0, 1, 16, 16), torch.zeros(0, 2))


def test_vib_loss_gradients_match_finite_differences():
    config = EncoderConfig(height=8, width=8, conv_channels=(2, 3), latent_dim=3)
    model = VibPolicy(encoder=config, hidden_dim=4, beta=0.1, seed=3)
    gen = torch.Generator().manual_seed(11)
    batch = {'obs': torch.rand(2, 1, 8, 8, generator=gen, dtype=DTYPE),
             'action': torch.rand(2, 2, generator=gen, dtype=DTYPE)}
    g, loss, nodes, _ = model.loss_graph(batch, torch.Generator().manual_seed(0))
    g.forward(loss)
    grads = g.backward(loss, wrt=list(nodes.values()))

    h = 1e-6
    pick = torch.Generator().manual_seed(1)
    for name, node in nodes.items():
        p0 = model.params[name]
        for i in torch.randperm(p0.numel(), generator=pick)[:3].tolist():
            values = []
            for sign in (1.0, -1.0):
                p = p0.clone()
                p.view(-1)[i] += sign * h
                g.bind(node, p)
                values.append(g.forward(loss).item())
            g.bind(node, p0)
            fd = (values[0] - values[1]) / (2 * h)
            an = grads[node].reshape(-1)[i].item()
            assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an)) + 1e-8, name


def test_training_reduces_loss():
    trajs = make_trajectories(n_traj=20, length=50)
    _, history = train_policy(trajs, TrainConfig(epochs=2, lr=1e-2), encoder=SMALL)
    assert len(history) == 2
    assert history[-1].loss < history[0].loss


def test_training_is_deterministic():
    trajs = make_trajectories(n_traj=2, length=40)
    config = TrainConfig(epochs=1, batch_size=16, seed=4)
    a, _ = train_policy(trajs, config, encoder=SMALL)
    b, _ = train_policy(trajs, config, encoder=SMALL)
    for name in a.params:
        assert torch.equal(a.params[name], b.params[name]), name


def test_zero_epochs_keep_initial_weights():
    trajs = make_trajectories(n_traj=1, length=10)
    model, history = train_policy(trajs, TrainConfig(epochs=0, seed=2), encoder=SMALL)
    assert history == []
    fresh = VibPolicy(encoder=SMALL, seed=2)
    for name in fresh.params:
        assert torch.equal(model.params[name], fresh.params[name])


def test_large_beta_pulls_posterior_to_prior():
    trajs = make_trajectories(n_traj=4, length=50)
    obs = torch.as_tensor(trajs.frames[0], dtype=DTYPE)
    before = VibPolicy(encoder=SMALL, seed=0).scores(obs).mean().item()
    model, _ = train_policy(trajs, TrainConfig(epochs=3, lr=1e-2, beta=1e3), encoder=SMALL)
    assert model.scores(obs).mean().item() < before


def test_train_policy_rejects_wrong_obs_shape():
    trajs = make_trajectories(n_traj=1, length=5)
    with pytest.raises(ValueError):
        train_policy(trajs, TrainConfig(epochs=1), encoder=EncoderConfig())


def test_train_policy_rejects_empty_dataset():
    with pytest.raises(ValueError):
        train_policy(TrajectorySet(), TrainConfig(epochs=1), encoder=SMALL)


def test_policy_step_without_band():
    model = VibPolicy(encoder=SMALL)
    result = policy_step(torch.rand(1, 16, 16), model, None, t=0)
    assert result.is_ood is None
    assert result.error == 'band missing'
    assert 0.0 <= result.action.v <= 1.0
    assert result.score >= 0.0


def test_policy_step_inside_band_has_no_heatmap():
    model = VibPolicy(encoder=SMALL)
    band = PredictionBand(mu=np.zeros(5), w=1e9, alpha=0.05, T=4, n_mu=2, n_w=2)
    result = policy_step(torch.rand(1, 16, 16), model, band, t=7)
    assert result.is_ood is False
    assert result.heatmap is None


def test_policy_step_flagged_frame_has_heatmap():
    model = VibPolicy(encoder=SMALL)
    obs = torch.rand(1, 16, 16, dtype=DTYPE)
    band = PredictionBand(mu=np.full(5, -1.0), w=0.0, alpha=0.05, T=4, n_mu=2, n_w=2)
    result = policy_step(obs, model, band, t=3)
    assert result.is_ood is True
    assert result.heatmap.shape == (16, 16)
    assert (result.heatmap.values >= 0).all()
    expected = grad_cam(SMALL, model.params, obs)[0]
    assert torch.allclose(result.heatmap.values, expected.values)

    actions, kl = model.act(obs)
    assert result.score == pytest.approx(kl.item())
    assert result.action.v == pytest.approx(actions[0, 0].item())


def test_policy_step_rejects_batches():
    model = VibPolicy(encoder=SMALL)
    with pytest.raises(ValueError):
        policy_step(torch.rand(2, 1, 16, 16), model, None, t=0)


def test_save_and_load(tmp_path):
    model = VibPolicy(encoder=SMALL, hidden_dim=8, beta=0.25, seed=9)
    model.save(tmp_path / 'policy.fwt')
    loaded = load_model(tmp_path / 'policy.fwt', expected_kind='policy')
    assert isinstance(loaded, VibPolicy)
    assert loaded.encoder_config == SMALL
    assert loaded.hidden_dim == 8
    assert loaded.beta == 0.25
    assert list(loaded.params) == list(model.params)
    for name, p in model.params.items():
        assert torch.equal(loaded.params[name], p.to(torch.float32).to(DTYPE))


@pytest.fixture
def conv_calls(monkeypatch):
    import fare.autograd.graph as graph_module
    calls = []
    conv2d = graph_module._FORWARD['conv2d']

    def counting_conv2d(node, *args):
        calls.append(node.id)
        return conv2d(node, *args)

    monkeypatch.setitem(graph_module._FORWARD, 'conv2d', counting_conv2d)
    return calls


@pytest.mark.parametrize('w', [1e9, 0.0])
def test_policy_step_runs_encoder_once(conv_calls, w):
    model = VibPolicy(encoder=SMALL)
    band = PredictionBand(mu=np.full(5, -1.0), w=w, alpha=0.05, T=4, n_mu=2, n_w=2)
    result = policy_step(torch.rand(1, 16, 16), model, band, t=0)
    assert result.is_ood is (w == 0.0)
    assert len(conv_calls) == len(SMALL.conv_channels)


def test_default_policy_step_runs_three_convolutions(conv_calls):
    model = VibPolicy()
    c, h, w = EncoderConfig().obs_shape()
    band = PredictionBand(mu=np.zeros(5), w=1e9, alpha=0.05, T=4, n_mu=2, n_w=2)
    policy_step(torch.rand(c, h, w), model, band, t=0)
    assert len(conv_calls) == len(EncoderConfig().conv_channels) == 3


def test_act_and_encode_run_encoder_once(conv_calls):
    model = VibPolicy(encoder=SMALL)
    obs = torch.rand(3, 1, 16, 16)
    model.act(obs)
    assert len(conv_calls) == len(SMALL.conv_channels)
    conv_calls.clear()
    model.encode(obs)
    assert len(conv_calls) == len(SMALL.conv_channels)


@pytest.fixture(scope='module')
def corridor_policy():
    '''A small policy trained on expert corridor demonstrations, with a band
    calibrated on held-out corridor runs.'''
    sim = SimConfig(image_height=16, image_width=16)
    train, calib = collect_dataset(24, ('corridor',), seed=0, config=CollectConfig(max_steps=40), sim=sim)
    model, _ = train_policy(train, TrainConfig(epochs=15, batch_size=32, lr=5e-3), encoder=SMALL)
    band = fit_band(chunk([model.scores(frames).numpy() for frames in calib.frames], T=4), alpha=0.05)
    return model, band, calib


def test_trained_policy_drives_straight_on_straight_corridor(corridor_policy):
    model, _, calib = corridor_policy
    frames, actions = calib.stacked()
    straight = np.abs(actions[:, 1]) <= 0.05
    assert straight.sum() >= 10
    predicted, _ = model.act(frames[straight])
    omega = predicted[:, 1].numpy()
    assert np.mean(np.abs(omega) <= 0.2) >= 0.9


def test_trained_policy_flags_blackout(corridor_policy):
    model, band, calib = corridor_policy
    blackout = np.zeros((50,) + calib.obs_shape, dtype=np.float32)
    _, scores = model.act(blackout)
    flags = [is_ood(s, t, band) for t, s in enumerate(scores.tolist())]
    assert np.mean(flags) >= 0.95
