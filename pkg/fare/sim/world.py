# Copyright (c)  2026  Fare authors
# Apache 2.0

import logging
import math
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from fare.sim.geometry import (box_segments, cumulative_lengths, offset_polyline, point_at, point_segment_distance,
                               polyline_segments, tangent_at, wrap_angle)

LAYOUTS = ('corridor', 'plaza', 'park')


@dataclass(frozen=True)
class SimConfig:
    # control rate is 1 / dt = 10 steps per second
    dt: float = 0.1
    v_max: float = 1.0
    omega_max: float = 1.5
    robot_radius: float = 0.3
    fov_deg: float = 140.0
    image_height: int = 48
    image_width: int = 64
    max_range: float = 8.0
    corridor_half_width: float = 1.5
    path_half_width: float = 0.35
    min_path_length: float = 60.0

    @property
    def steps_per_second(self) -> int:
        return int(round(1.0 / self.dt))


@dataclass(frozen=True)
class ActionCmd:
    '''Normalized velocity command. The policy emits v in [0, 1]; macro-actions
    may drive in reverse with v in [-1, 0].'''
    v: float
    omega: float

    def clamped(self, allow_reverse: bool = False) -> 'ActionCmd':
        lo = -1.0 if allow_reverse else 0.0
        return ActionCmd(v=float(np.clip(self.v, lo, 1.0)), omega=float(np.clip(self.omega, -1.0, 1.0)))

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.omega], dtype=np.float64)

    @classmethod
    def stop(cls) -> 'ActionCmd':
        return cls(0.0, 0.0)


@dataclass(frozen=True)
class DynamicObstacle:
    '''A disc that approaches the robot, lingers, then walks away.'''
    position: Tuple[float, float]
    velocity: Tuple[float, float]
    radius: float = 0.3
    hold_distance: float = 0.7
    hold_steps: int = 30
    phase: str = 'approach'  # approach | hold | retreat
    timer: int = 0

    def advance(self, robot_xy: np.ndarray, dt: float) -> 'DynamicObstacle':
        pos = np.asarray(self.position)
        vel = np.asarray(self.velocity)
        if self.phase == 'approach':
            pos = pos + vel * dt
            if np.linalg.norm(pos - robot_xy) <= self.hold_distance:
                return replace(self, position=tuple(pos), phase='hold', timer=0)
            return replace(self, position=tuple(pos))
        if self.phase == 'hold':
            if self.timer + 1 >= self.hold_steps:
                return replace(self, phase='retreat', velocity=tuple(-vel), timer=0)
            return replace(self, timer=self.timer + 1)
        return replace(self, position=tuple(pos + vel * dt), timer=self.timer + 1)


@dataclass(frozen=True)
class WorldState:
    layout: str
    seed: int
    # (M, 4) wall segments and their tags: 0 static, 1 injected by a failure
    walls: np.ndarray
    wall_tags: np.ndarray
    path: np.ndarray
    pose: Tuple[float, float, float]
    obstacles: Tuple[DynamicObstacle, ...] = ()
    blackout_active: bool = False
    time: int = 0
    progress: float = 0.0
    collided: bool = False
    # failures registered but not yet applied, and those already applied
    pending_failures: Tuple = ()
    applied_failures: Tuple = ()

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.pose[:2])

    @property
    def path_length(self) -> float:
        return float(cumulative_lengths(self.path)[-1])

    def with_walls(self, segments: np.ndarray, tag: int) -> 'WorldState':
        segments = np.asarray(segments, dtype=np.float64).reshape(-1, 4)
        return replace(self,
                       walls=np.concatenate([self.walls, segments]),
                       wall_tags=np.concatenate([self.wall_tags, np.full(len(segments), tag, dtype=np.int64)]))


def _random_path(rng: np.random.Generator, config: SimConfig, num_segments: int = 8,
                 max_turn_deg: float = 40.0) -> np.ndarray:
    points = [np.zeros(2)]
    heading = 0.0
    total = 0.0
    while len(points) <= num_segments or total < config.min_path_length:
        length = rng.uniform(7.5, 12.0)
        points.append(points[-1] + length * np.array([math.cos(heading), math.sin(heading)]))
        total += length
        turn = math.radians(rng.uniform(-max_turn_deg, max_turn_deg))
        heading = float(np.clip(heading + turn, -math.radians(70.0), math.radians(70.0)))
    return np.array(points)


def _clutter(rng: np.random.Generator, path: np.ndarray, count: int, half_size: Tuple[float, float],
             min_dist: float, max_dist: float) -> np.ndarray:
    lo = path.min(axis=0) - max_dist
    hi = path.max(axis=0) + max_dist
    segs = polyline_segments(path)
    boxes = []
    attempts = 0
    while len(boxes) < count and attempts < count * 50:
        attempts += 1
        c = rng.uniform(lo, hi)
        h = rng.uniform(*half_size)
        d, _ = point_segment_distance(c[None, :], segs)
        if min_dist + h * math.sqrt(2.0) <= d.min() <= max_dist:
            boxes.append(box_segments(c, h))
    return np.concatenate(boxes) if boxes else np.zeros((0, 4))


def _layout_walls(layout: str, rng: np.random.Generator, path: np.ndarray, config: SimConfig) -> np.ndarray:
    if layout == 'corridor':
        hw = config.corridor_half_width
        left = offset_polyline(path, hw)
        right = offset_polyline(path, -hw)
        d0 = (path[1] - path[0]) / np.linalg.norm(path[1] - path[0])
        d1 = (path[-1] - path[-2]) / np.linalg.norm(path[-1] - path[-2])
        caps = np.array([
            np.concatenate([left[0] - 1.5 * d0, right[0] - 1.5 * d0]),
            np.concatenate([left[0] - 1.5 * d0, left[0]]),
            np.concatenate([right[0] - 1.5 * d0, right[0]]),
            np.concatenate([left[-1] + 1.5 * d1, right[-1] + 1.5 * d1]),
            np.concatenate([left[-1], left[-1] + 1.5 * d1]),
            np.concatenate([right[-1], right[-1] + 1.5 * d1]),
        ])
        return np.concatenate([polyline_segments(left), polyline_segments(right), caps])
    if layout == 'plaza':
        return _clutter(rng, path, count=45, half_size=(0.2, 0.45), min_dist=1.6, max_dist=4.0)
    if layout == 'park':
        return _clutter(rng, path, count=30, half_size=(0.15, 0.25), min_dist=1.8, max_dist=5.0)
    raise ValueError(f'Unknown layout: {layout}')


def path_clearance(path: np.ndarray, walls: np.ndarray, spacing: float = 0.25) -> float:
    '''Smallest distance from points sampled along the path to any wall.'''
    if len(walls) == 0:
        return math.inf
    samples = []
    for a, b in zip(path[:-1], path[1:]):
        n = max(2, int(np.linalg.norm(b - a) / spacing))
        samples.append(a + np.linspace(0.0, 1.0, n)[:, None] * (b - a))
    d, _ = point_segment_distance(np.concatenate(samples), walls)
    return float(d.min())


def build_world(layout: str, seed: int, config: SimConfig = SimConfig(),
                max_attempts: int = 50) -> WorldState:
    '''Generate a world with a feasible route at least
    ``config.min_path_length`` long. Deterministic per (layout, seed).'''
    if layout not in LAYOUTS:
        raise ValueError(f'Unknown layout: {layout}, expected one of {LAYOUTS}')
    rng = np.random.default_rng(seed)
    min_clearance = min(config.corridor_half_width - 0.05, 1.2)
    for attempt in range(max_attempts):
        path = _random_path(rng, config)
        walls = _layout_walls(layout, rng, path, config)
        if path_clearance(path, walls) >= min_clearance:
            break
        logging.debug(f'{layout} world seed {seed}: attempt {attempt} rejected')
    else:
        raise RuntimeError(f'Could not build a feasible {layout} world for seed {seed}')
    d = path[1] - path[0]
    return WorldState(layout=layout,
                      seed=seed,
                      walls=walls,
                      wall_tags=np.zeros(len(walls), dtype=np.int64),
                      path=path,
                      pose=(float(path[0, 0]), float(path[0, 1]), math.atan2(d[1], d[0])))


def place_robot(world: WorldState, s: float, lateral: float = 0.0, heading_offset: float = 0.0) -> WorldState:
    '''Put the robot at arc length `s` along the route, shifted `lateral` to the left.'''
    p = point_at(world.path, s)
    t = tangent_at(world.path, s)
    n = np.array([-t[1], t[0]])
    xy = p + lateral * n
    theta = wrap_angle(math.atan2(t[1], t[0]) + heading_offset)
    return replace(world, pose=(float(xy[0]), float(xy[1]), theta), progress=float(s))
