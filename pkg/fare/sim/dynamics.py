# Copyright (c)  2026  Fare authors
# Apache 2.0

import math
from dataclasses import replace
from typing import Optional, Tuple

import numpy as np

from fare.sim.failures import apply_due_failures
from fare.sim.geometry import point_segment_distance, project_on_path, wrap_angle
from fare.sim.world import ActionCmd, DynamicObstacle, SimConfig, WorldState


def resolve_collisions(xy: np.ndarray, world: WorldState, obstacles: Tuple[DynamicObstacle, ...],
                       radius: float, iterations: int = 4) -> Tuple[np.ndarray, bool]:
    '''Push the robot disc out of walls and obstacle discs; returns the new
    position and whether any contact happened.'''
    collided = False
    for _ in range(iterations):
        moved = False
        if len(world.walls):
            d, closest = point_segment_distance(xy[None, :], world.walls)
            for j in np.nonzero(d[0] < radius - 1e-12)[0]:
                c = closest[0, j]
                dist = float(np.linalg.norm(xy - c))
                if dist >= radius - 1e-12:
                    # already pushed clear by an earlier segment this pass
                    continue
                if dist < 1e-9:
                    seg = world.walls[j]
                    e = seg[2:4] - seg[0:2]
                    normal = np.array([-e[1], e[0]]) / max(np.linalg.norm(e), 1e-12)
                else:
                    normal = (xy - c) / dist
                xy = c + normal * radius
                moved = True
        for ob in obstacles:
            c = np.asarray(ob.position)
            dist = float(np.linalg.norm(xy - c))
            reach = radius + ob.radius
            if dist < reach - 1e-12:
                normal = (xy - c) / dist if dist > 1e-9 else np.array([1.0, 0.0])
                xy = c + normal * reach
                moved = True
        collided = collided or moved
        if not moved:
            break
    return xy, collided


def step(world: WorldState, action: ActionCmd, config: SimConfig = SimConfig(),
         dt: Optional[float] = None) -> WorldState:
    '''Advance the unicycle by one control step.

    Contacts are resolved by pushing the robot out of walls and obstacles,
    so it slides along or stops at them. Dynamic obstacles then advance and
    failures whose trigger step has been reached are applied.
    '''
    dt = config.dt if dt is None else dt
    if dt <= 0:
        raise ValueError(f'dt must be positive, got {dt}')
    action = action.clamped(allow_reverse=True)
    x, y, theta = world.pose
    xy = np.array([x + action.v * math.cos(theta) * dt * config.v_max,
                   y + action.v * math.sin(theta) * dt * config.v_max])
    theta = wrap_angle(theta + action.omega * dt * config.omega_max)

    obstacles = tuple(ob.advance(xy, dt) for ob in world.obstacles)
    obstacles = tuple(ob for ob in obstacles
                      if ob.phase != 'retreat' or np.linalg.norm(np.asarray(ob.position) - xy) < config.max_range)
    xy, collided = resolve_collisions(xy, world, obstacles, config.robot_radius)
    s, _ = project_on_path(world.path, xy, world.progress - 3.0, world.progress + 3.0)

    world = replace(world, pose=(float(xy[0]), float(xy[1]), theta), obstacles=obstacles,
                    time=world.time + 1, progress=s, collided=collided)
    return apply_due_failures(world, config)
