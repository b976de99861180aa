import math

import pytest

from fare.sim import LAYOUTS, ActionCmd, at_route_end, build_world, expert_action, place_robot, step
from fare.sim.expert import heading_error


def test_expert_follows_the_route():
    world = build_world('corridor', 4)
    for _ in range(100):
        world = step(world, expert_action(world))
        assert not world.collided
    assert world.progress > 5.0


def test_expert_steers_back_towards_route():
    world = place_robot(build_world('corridor', 0), 3.0, lateral=0.5)
    a = expert_action(world)
    # left of the route: turn right
    assert a.omega < 0.0
    assert 0.0 < a.v <= 1.0


def test_expert_turns_around_when_facing_backwards():
    world = place_robot(build_world('corridor', 0), 3.0, heading_offset=math.pi)
    assert abs(heading_error(world)) > math.pi / 2
    assert expert_action(world).v == 0.0


def test_expert_stops_at_route_end():
    world = build_world('corridor', 0)
    world = place_robot(world, world.path_length)
    assert at_route_end(world)
    assert expert_action(world) == ActionCmd.stop()


@pytest.mark.parametrize('layout', LAYOUTS)
@pytest.mark.parametrize('seed', range(15))
def test_expert_reaches_route_end_without_collision(layout, seed):
    world = build_world(layout, seed)
    for _ in range(3000):
        if at_route_end(world):
            break
        world = step(world, expert_action(world))
        assert not world.collided, world.time
    assert at_route_end(world)
