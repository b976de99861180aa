import numpy as np
import pytest

from fare.sim import CollectConfig, collect_dataset, demonstrate, trajectory_seed

SHORT = CollectConfig(max_steps=5)


def test_demonstration_shapes():
    frames, actions = demonstrate('park', 7, SHORT)
    assert frames.shape == (5, 1, 48, 64)
    assert actions.shape == (5, 2)
    assert frames.dtype == np.float32
    assert ((actions[:, 0] >= 0) & (actions[:, 0] <= 1)).all()
    assert ((actions[:, 1] >= -1) & (actions[:, 1] <= 1)).all()


def test_demonstration_is_deterministic():
    a = demonstrate('plaza', 11, SHORT)
    b = demonstrate('plaza', 11, SHORT)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], b[1])


def test_dataset_split():
    train, calib = collect_dataset(10, seed=1, config=SHORT)
    assert len(train) == 8
    assert len(calib) == 2
    assert set(train.seeds).isdisjoint(calib.seeds)
    assert sorted(train.seeds + calib.seeds) == [trajectory_seed(1, i) for i in range(10)]
    assert set(train.layouts + calib.layouts) == {'corridor', 'plaza', 'park'}
    assert train.num_frames == 8 * 5


def test_dataset_is_reproducible():
    a, _ = collect_dataset(10, layouts=('corridor',), seed=2, config=SHORT)
    b, _ = collect_dataset(10, layouts=('corridor',), seed=2, config=SHORT)
    assert a.seeds == b.seeds
    assert all(np.array_equal(x, y) for x, y in zip(a.frames, b.frames))


def test_too_few_trajectories():
    with pytest.raises(ValueError):
        collect_dataset(9)


def test_unknown_layout():
    with pytest.raises(ValueError):
        collect_dataset(10, layouts=('maze',))
