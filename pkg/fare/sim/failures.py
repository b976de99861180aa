# Copyright (c)  2026  Fare authors
# Apache 2.0

"""
Failure injection: sensor blackout, blocked paths (local minima and
dead-ends) and close-range dynamic obstacles.

Failures are registered with :func:`inject_failure` and applied by the
simulator step that reaches their trigger step, so the observation rendered
at ``trigger_step`` is the first one affected.
"""

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from fare.sim.geometry import point_at, point_segment_distance, tangent_at
from fare.sim.world import DynamicObstacle, SimConfig, WorldState

FAILURE_KINDS = ('blackout', 'blocked_local_minima', 'blocked_dead_end', 'dynamic_obstacle')
IRRECOVERABLE = frozenset({'blackout', 'blocked_dead_end'})
SIDES = ('left', 'right', 'front')

# "8 s mark" at 10 steps per second
DEFAULT_TRIGGER_STEP = 80


@dataclass(frozen=True)
class FailureSpec:
    kind: str
    trigger_step: int = DEFAULT_TRIGGER_STEP
    side: str = 'left'
    # distance ahead of the robot (along the route) of blocking geometry
    distance: float = 1.2
    # approach speed of a dynamic obstacle, world units per second
    speed: float = 0.3

    def validate(self) -> None:
        if self.kind not in FAILURE_KINDS:
            raise ValueError(f'Invalid failure kind: {self.kind}, expected one of {FAILURE_KINDS}')
        if self.trigger_step < 0:
            raise ValueError(f'Invalid trigger_step: {self.trigger_step}')
        if self.side not in SIDES:
            raise ValueError(f'Invalid side: {self.side}, expected one of {SIDES}')
        if self.distance <= 0 or self.speed < 0:
            raise ValueError(f'Invalid failure geometry: distance={self.distance}, speed={self.speed}')

    @property
    def recoverable(self) -> bool:
        return self.kind not in IRRECOVERABLE


def _side_sign(side: str) -> float:
    return {'left': 1.0, 'right': -1.0, 'front': 0.0}[side]


def _frame(world: WorldState, ahead: float):
    s = world.progress + ahead
    p = point_at(world.path, s)
    t = tangent_at(world.path, s)
    return p, t, np.array([-t[1], t[0]])


def _slab(p: np.ndarray, t: np.ndarray, n: np.ndarray, lo: float, hi: float, thickness: float = 0.1) -> np.ndarray:
    '''Thin box spanning normal offsets [lo, hi] around p, as 4 segments.'''
    a, b = p + lo * n, p + hi * n
    c, d = b + thickness * t, a + thickness * t
    return np.array([np.concatenate(x) for x in ((a, b), (b, c), (c, d), (d, a))])


def apply_failure(world: WorldState, spec: FailureSpec, config: SimConfig = SimConfig()) -> WorldState:
    if spec.kind == 'blackout':
        world = replace(world, blackout_active=True)
    elif spec.kind == 'blocked_local_minima':
        p, t, n = _frame(world, spec.distance)
        sign = _side_sign(spec.side)
        # covers the route centre and the given side, leaving a gap on the other
        lo, hi = (-0.8, 0.8) if sign == 0.0 else sorted((-0.2 * sign, 1.4 * sign))
        world = world.with_walls(_slab(p, t, n, lo, hi), tag=1)
    elif spec.kind == 'blocked_dead_end':
        p, t, n = _frame(world, spec.distance)
        half = 1.3
        front = _slab(p, t, n, -half, half)
        depth = spec.distance + 4.0
        sides = np.array([np.concatenate([p + half * n, p + half * n - depth * t]),
                          np.concatenate([p - half * n, p - half * n - depth * t])])
        world = world.with_walls(np.concatenate([front, sides]), tag=1)
    elif spec.kind == 'dynamic_obstacle':
        x, y, theta = world.pose
        bearing = theta + math.radians(50.0) * _side_sign(spec.side)
        spawn_distance = 2.8 * config.robot_radius
        pos = np.array([x, y]) + spawn_distance * np.array([math.cos(bearing), math.sin(bearing)])
        direction = np.array([x, y]) - pos
        direction /= np.linalg.norm(direction)
        ob = DynamicObstacle(position=tuple(pos), velocity=tuple(spec.speed * direction),
                             radius=config.robot_radius, hold_distance=2.3 * config.robot_radius)
        world = replace(world, obstacles=world.obstacles + (ob,))
    else:
        raise ValueError(f'Invalid failure kind: {spec.kind}')
    return replace(world, applied_failures=world.applied_failures + (spec,))


def inject_failure(world: WorldState, spec: FailureSpec, config: SimConfig = SimConfig()) -> WorldState:
    '''Register `spec`; it takes effect at ``spec.trigger_step`` (immediately if
    the world is already at that step).'''
    spec.validate()
    if world.time > spec.trigger_step:
        raise ValueError(f'Trigger step {spec.trigger_step} already passed (world time {world.time})')
    world = replace(world, pending_failures=world.pending_failures + (spec,))
    return apply_due_failures(world, config)


def apply_due_failures(world: WorldState, config: SimConfig = SimConfig()) -> WorldState:
    due = [f for f in world.pending_failures if f.trigger_step <= world.time]
    if not due:
        return world
    world = replace(world, pending_failures=tuple(f for f in world.pending_failures if f.trigger_step > world.time))
    for spec in due:
        world = apply_failure(world, spec, config)
    return world


def flood_fill_reachable(world: WorldState,
                         goal: np.ndarray,
                         radius_limit: float = 3.5,
                         resolution: float = 0.1,
                         start: Optional[np.ndarray] = None,
                         config: SimConfig = SimConfig()) -> bool:
    '''Whether the robot disc can reach `goal` from `start` (the robot position
    by default) without leaving a disc of `radius_limit` around the start.
    Walls are inflated by the robot radius on a square grid.'''
    start = world.xy if start is None else np.asarray(start, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    n = int(math.ceil(radius_limit / resolution))
    coords = np.arange(-n, n + 1) * resolution
    gx, gy = np.meshgrid(coords, coords, indexing='ij')
    offsets = np.stack([gx.ravel(), gy.ravel()], axis=1)
    free = np.linalg.norm(offsets, axis=1) <= radius_limit
    if len(world.walls):
        d, _ = point_segment_distance(start + offsets, world.walls)
        free &= d.min(axis=1) >= config.robot_radius
    free = free.reshape(2 * n + 1, 2 * n + 1)

    def cell(p):
        i, j = np.round((p - start) / resolution).astype(int) + n
        return int(i), int(j)

    gi, gj = cell(goal)
    if not (0 <= gi <= 2 * n and 0 <= gj <= 2 * n) or not free[gi, gj]:
        return False
    seen = np.zeros_like(free)
    queue = deque([(n, n)])
    seen[n, n] = True
    while queue:
        i, j = queue.popleft()
        if (i, j) == (gi, gj):
            return True
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a, b = i + di, j + dj
            if 0 <= a <= 2 * n and 0 <= b <= 2 * n and free[a, b] and not seen[a, b]:
                seen[a, b] = True
                queue.append((a, b))
    return False
