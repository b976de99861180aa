# Copyright (c)  2026  Fare authors
# Apache 2.0

"""
Vectorized 2-D geometry: distances to segments, ray casting against
segments and circles, and arc-length bookkeeping on polylines.

Segments are stored as rows ``[x1, y1, x2, y2]``.
"""

import math
from typing import Tuple

import numpy as np


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def point_segment_distance(points: np.ndarray, segments: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    '''Distances from each point to each segment.

    Args:
      points: (P, 2)
      segments: (M, 4)
    Returns:
      distances (P, M) and closest points (P, M, 2).
    '''
    points = np.atleast_2d(points)
    a = segments[None, :, 0:2]
    b = segments[None, :, 2:4]
    p = points[:, None, :]
    ab = b - a
    denom = np.maximum((ab * ab).sum(-1), 1e-12)
    t = np.clip(((p - a) * ab).sum(-1) / denom, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1), closest


def ray_segment_distances(origin: np.ndarray, directions: np.ndarray, segments: np.ndarray) -> np.ndarray:
    '''Distance along each ray to each segment, inf when missed. (R, M).'''
    if len(segments) == 0:
        return np.full((len(directions), 0), np.inf)
    a = segments[:, 0:2]
    e = segments[:, 2:4] - a
    d = directions[:, None, :]
    w = a[None, :, :] - origin[None, None, :]
    # solve origin + t d = a + u e
    denom = d[..., 0] * e[None, :, 1] - d[..., 1] * e[None, :, 0]
    with np.errstate(divide='ignore', invalid='ignore'):
        t = (w[..., 0] * e[None, :, 1] - w[..., 1] * e[None, :, 0]) / denom
        u = (w[..., 0] * d[..., 1] - w[..., 1] * d[..., 0]) / denom
    hit = (np.abs(denom) > 1e-12) & (t > 0.0) & (u >= 0.0) & (u <= 1.0)
    return np.where(hit, t, np.inf)


def ray_circle_distances(origin: np.ndarray, directions: np.ndarray,
                         centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    '''Distance along each (unit) ray to each circle, inf when missed. (R, K).'''
    if len(centers) == 0:
        return np.full((len(directions), 0), np.inf)
    oc = origin[None, :] - centers
    b = directions @ oc.T
    c = (oc * oc).sum(-1)[None, :] - radii[None, :] ** 2
    disc = b * b - c
    with np.errstate(invalid='ignore'):
        sq = np.sqrt(np.maximum(disc, 0.0))
    t0 = -b - sq
    t1 = -b + sq
    t = np.where(t0 > 0.0, t0, t1)
    return np.where((disc >= 0.0) & (t > 0.0), t, np.inf)


def polyline_segments(points: np.ndarray) -> np.ndarray:
    return np.concatenate([points[:-1], points[1:]], axis=1)


def cumulative_lengths(path: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def point_at(path: np.ndarray, s: float) -> np.ndarray:
    '''Point at arc length `s`, clamped to the polyline ends.'''
    cum = cumulative_lengths(path)
    s = float(np.clip(s, 0.0, cum[-1]))
    i = int(np.clip(np.searchsorted(cum, s, side='right') - 1, 0, len(path) - 2))
    seg_len = max(cum[i + 1] - cum[i], 1e-12)
    return path[i] + (s - cum[i]) / seg_len * (path[i + 1] - path[i])


def tangent_at(path: np.ndarray, s: float) -> np.ndarray:
    cum = cumulative_lengths(path)
    i = int(np.clip(np.searchsorted(cum, s, side='right') - 1, 0, len(path) - 2))
    d = path[i + 1] - path[i]
    return d / max(np.linalg.norm(d), 1e-12)


def project_on_path(path: np.ndarray, point: np.ndarray,
                    s_min: float = -np.inf, s_max: float = np.inf) -> Tuple[float, float]:
    '''Arc length of the closest path point within [s_min, s_max] and the
    distance to it.'''
    cum = cumulative_lengths(path)
    segs = polyline_segments(path)
    dist, closest = point_segment_distance(point[None, :], segs)
    s = cum[:-1] + np.linalg.norm(closest[0] - segs[:, 0:2], axis=1)
    allowed = (s >= s_min) & (s <= s_max)
    if not allowed.any():
        allowed[:] = True
    dist = np.where(allowed, dist[0], np.inf)
    j = int(np.argmin(dist))
    return float(s[j]), float(dist[j])


def box_segments(center: np.ndarray, half_size: float) -> np.ndarray:
    x, y = center
    h = half_size
    corners = np.array([[x - h, y - h], [x + h, y - h], [x + h, y + h], [x - h, y + h], [x - h, y - h]])
    return polyline_segments(corners)


def offset_polyline(path: np.ndarray, offset: float) -> np.ndarray:
    '''Mitred offset of a polyline; positive offsets lie to the left.'''
    d = np.diff(path, axis=0)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    normals = np.stack([-d[:, 1], d[:, 0]], axis=1)
    out = np.empty_like(path)
    out[0] = path[0] + offset * normals[0]
    out[-1] = path[-1] + offset * normals[-1]
    for i in range(1, len(path) - 1):
        m = normals[i - 1] + normals[i]
        m /= np.linalg.norm(m)
        out[i] = path[i] + offset / max(float(m @ normals[i]), 0.2) * m
    return out
