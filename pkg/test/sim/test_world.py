import math

import numpy as np
import pytest

from fare.sim import LAYOUTS, ActionCmd, SimConfig, build_world, place_robot, step


@pytest.mark.parametrize('layout', LAYOUTS)
def test_worlds_are_deterministic(layout):
    a, b = build_world(layout, seed=3), build_world(layout, seed=3)
    assert np.array_equal(a.walls, b.walls)
    assert np.array_equal(a.path, b.path)
    assert a.path_length >= SimConfig().min_path_length
    assert len(a.walls) > 0


def test_different_seeds_give_different_worlds():
    assert not np.array_equal(build_world('plaza', 0).path, build_world('plaza', 1).path)


def test_unknown_layout():
    with pytest.raises(ValueError):
        build_world('maze', 0)


def test_robot_starts_at_route_start():
    world = build_world('corridor', 0)
    assert np.allclose(world.xy, world.path[0])
    assert world.time == 0
    assert world.progress == 0.0


def test_place_robot_lateral_offset_is_to_the_left():
    world = build_world('corridor', 0)
    placed = place_robot(world, 2.0, lateral=0.5)
    d = world.path[1] - world.path[0]
    d /= np.linalg.norm(d)
    offset = placed.xy - (world.path[0] + 2.0 * d)
    assert np.allclose(offset, 0.5 * np.array([-d[1], d[0]]))
    assert placed.progress == 2.0


def test_action_clamping():
    assert ActionCmd(2.0, -3.0).clamped() == ActionCmd(1.0, -1.0)
    assert ActionCmd(-0.5, 0.0).clamped() == ActionCmd(0.0, 0.0)
    assert ActionCmd(-0.5, 0.0).clamped(allow_reverse=True) == ActionCmd(-0.5, 0.0)


def test_straight_step():
    config = SimConfig()
    world = place_robot(build_world('corridor', 0), 2.0)
    moved = step(world, ActionCmd(1.0, 0.0), config)
    assert np.linalg.norm(moved.xy - world.xy) == pytest.approx(config.dt * config.v_max)
    assert moved.pose[2] == pytest.approx(world.pose[2])
    assert moved.time == 1
    assert moved.progress > world.progress
    assert not moved.collided


def test_rotation_in_place():
    config = SimConfig()
    world = place_robot(build_world('corridor', 0), 2.0)
    turned = step(world, ActionCmd(0.0, 1.0), config)
    assert np.allclose(turned.xy, world.xy)
    assert turned.pose[2] - world.pose[2] == pytest.approx(config.dt * config.omega_max)


def test_robot_cannot_pass_through_walls():
    config = SimConfig()
    world = place_robot(build_world('corridor', 0), 3.0, heading_offset=math.pi / 2)
    collided = False
    for _ in range(40):
        world = step(world, ActionCmd(1.0, 0.0), config)
        collided = collided or world.collided
    assert collided
    d = world.path[1] - world.path[0]
    d /= np.linalg.norm(d)
    lateral = float(np.dot(world.xy - world.path[0], np.array([-d[1], d[0]])))
    assert lateral <= config.corridor_half_width - config.robot_radius + 1e-6


def test_step_rejects_non_positive_dt():
    with pytest.raises(ValueError):
        step(build_world('corridor', 0), ActionCmd(1.0, 0.0), dt=0.0)


def test_zero_command_keeps_the_pose():
    world = build_world('park', 2)
    moved = step(world, ActionCmd(0.0, 0.0))
    assert np.allclose(moved.xy, world.xy)
    assert moved.pose[2] == pytest.approx(world.pose[2])
    assert moved.time == world.time + 1
