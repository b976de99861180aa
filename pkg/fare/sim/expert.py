# Copyright (c)  2026  Fare authors
# Apache 2.0

import math
from dataclasses import dataclass

import numpy as np

from fare.sim.geometry import point_at, wrap_angle
from fare.sim.world import ActionCmd, SimConfig, WorldState


@dataclass(frozen=True)
class ExpertConfig:
    lookahead: float = 1.2
    # desired turn rate (rad/s) per radian of heading error
    steering_gain: float = 2.0
    # the route counts as finished this close to its end
    goal_tolerance: float = 0.3


def heading_error(world: WorldState, config: ExpertConfig = ExpertConfig()) -> float:
    target = point_at(world.path, world.progress + config.lookahead)
    x, y, theta = world.pose
    return wrap_angle(math.atan2(target[1] - y, target[0] - x) - theta)


def at_route_end(world: WorldState, config: ExpertConfig = ExpertConfig()) -> bool:
    return world.progress >= world.path_length - config.goal_tolerance


def expert_action(world: WorldState,
                  config: ExpertConfig = ExpertConfig(),
                  sim: SimConfig = SimConfig()) -> ActionCmd:
    '''Pure-pursuit steering towards the lookahead point on the route.
    Speed falls linearly with the heading error and is zero beyond 90 degrees;
    past the end of the route the expert stops.'''
    if at_route_end(world, config):
        return ActionCmd.stop()
    e = heading_error(world, config)
    omega = float(np.clip(config.steering_gain * e / sim.omega_max, -1.0, 1.0))
    v = float(np.clip(1.0 - abs(e) / (math.pi / 2.0), 0.0, 1.0))
    return ActionCmd(v=v, omega=omega)
