# Copyright (c)  2026  Fare authors
# Apache 2.0

"""
Column-raycast pseudo-depth rendering.

Each of the W image columns is one ray across a 140 degree horizontal field
of view, leftmost column first. A wall or obstacle hit at depth d fills the
rows within F/d of the horizon with an inverse-depth shade; floor rows below
it show the route marking where the ground point lies on the route.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from fare.sim.geometry import point_segment_distance, polyline_segments, ray_circle_distances, ray_segment_distances
from fare.sim.world import SimConfig, WorldState

# distance to the ground point seen by the bottom image row is 0.5 world units
# for the default 48-row image
FOCAL_ROWS = 11.75
ROUTE_SHADE = 0.3

TAG_NONE = -1
TAG_STATIC = 0
TAG_INJECTED = 1


@dataclass
class RayHits:
    depths: np.ndarray  # (W,), inf when nothing within range
    tags: np.ndarray  # (W,), TAG_* of the first hit


def ray_angles(theta: float, config: SimConfig = SimConfig()) -> np.ndarray:
    fov = math.radians(config.fov_deg)
    j = np.arange(config.image_width)
    return theta + fov / 2.0 - fov * (j + 0.5) / config.image_width


def raycast(world: WorldState, config: SimConfig = SimConfig()) -> RayHits:
    x, y, theta = world.pose
    origin = np.array([x, y])
    angles = ray_angles(theta, config)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)

    wall_t = ray_segment_distances(origin, dirs, world.walls)
    if world.obstacles:
        centers = np.array([ob.position for ob in world.obstacles])
        radii = np.array([ob.radius for ob in world.obstacles])
        ob_t = ray_circle_distances(origin, dirs, centers, radii)
    else:
        ob_t = np.full((len(dirs), 0), np.inf)
    all_t = np.concatenate([wall_t, ob_t], axis=1)
    all_tags = np.concatenate([world.wall_tags, np.full(ob_t.shape[1], TAG_INJECTED, dtype=np.int64)])

    depths = np.full(len(dirs), np.inf)
    tags = np.full(len(dirs), TAG_NONE, dtype=np.int64)
    if all_t.shape[1]:
        k = np.argmin(all_t, axis=1)
        best = all_t[np.arange(len(dirs)), k]
        hit = best < config.max_range
        depths[hit] = best[hit]
        tags[hit] = all_tags[k[hit]]
    return RayHits(depths=depths, tags=tags)


def render(world: WorldState, config: SimConfig = SimConfig()) -> np.ndarray:
    '''Render the robot's view as a (1, H, W) float array with values in [0, 1].

    With nothing in range the image is zero apart from the route marking: floor
    pixels whose ground point lies on the route read ROUTE_SHADE. A world
    without a route renders all zeros.
    '''
    H, W = config.image_height, config.image_width
    image = np.zeros((H, W))
    if world.blackout_active:
        return image[None]

    hits = raycast(world, config)
    horizon = H / 2.0
    focal = FOCAL_ROWS * H / 48.0
    rows = np.arange(H) + 0.5 - horizon  # signed offset from the horizon

    # floor: ground distance of each row below the horizon
    x, y, theta = world.pose
    angles = ray_angles(theta, config)
    below = rows > 0
    ground = np.full(H, np.inf)
    ground[below] = focal / rows[below]
    visible = below & (ground < config.max_range)
    if visible.any() and len(world.path) >= 2:
        r_idx = np.nonzero(visible)[0]
        d = ground[r_idx][:, None]
        px = x + d * np.cos(angles)[None, :]
        py = y + d * np.sin(angles)[None, :]
        pts = np.stack([px.ravel(), py.ravel()], axis=1)
        dist, _ = point_segment_distance(pts, polyline_segments(world.path))
        on_route = (dist.min(axis=1) <= config.path_half_width).reshape(len(r_idx), W)
        unoccluded = d < hits.depths[None, :]
        image[r_idx] = np.where(on_route & unoccluded, ROUTE_SHADE, 0.0)

    # walls and obstacles
    finite = np.isfinite(hits.depths)
    half = np.zeros(W)
    half[finite] = focal / hits.depths[finite]
    shade = np.zeros(W)
    shade[finite] = np.minimum(1.0, 1.0 / (0.5 + hits.depths[finite]))
    mask = np.abs(rows)[:, None] < half[None, :]
    image = np.where(mask, shade[None, :], image)
    return np.clip(image, 0.0, 1.0)[None]


def bin_edges(width: int) -> Tuple[int, int, int, int]:
    '''Column edges of the left/middle/right thirds; for W=64 the bins are
    columns [0, 21], [22, 42] and [43, 63].'''
    return 0, -(-width // 3), -(-2 * width // 3), width


def ground_truth_bins(world: WorldState, config: SimConfig = SimConfig()) -> Tuple[bool, bool, bool]:
    '''Image thirds whose first ray hit is injected failure geometry; all three
    during a blackout.'''
    if world.blackout_active:
        return True, True, True
    tags = raycast(world, config).tags
    edges = bin_edges(config.image_width)
    return tuple(bool((tags[edges[k]:edges[k + 1]] == TAG_INJECTED).any()) for k in range(3))
