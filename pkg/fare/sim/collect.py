# Copyright (c)  2026  Fare authors
# Apache 2.0

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from fare.data.trajectories import TrajectorySet
from fare.sim.dynamics import step
from fare.sim.expert import ExpertConfig, at_route_end, expert_action
from fare.sim.render import render
from fare.sim.world import LAYOUTS, ActionCmd, SimConfig, build_world, place_robot


@dataclass(frozen=True)
class CollectConfig:
    max_steps: int = 150
    calib_fraction: float = 0.2
    # std of the noise added to the executed (not the recorded) action
    v_noise: float = 0.05
    omega_noise: float = 0.15
    # spread of the start pose around the route
    lateral_noise: float = 0.3
    heading_noise: float = 0.2
    # recorded segments start at least this far before the end of the route
    min_remaining: float = 20.0


def trajectory_seed(seed: int, index: int) -> int:
    return seed * 100003 + index


def demonstrate(layout: str, traj_seed: int,
                config: CollectConfig = CollectConfig(),
                sim: SimConfig = SimConfig(),
                expert: ExpertConfig = ExpertConfig()) -> Tuple[np.ndarray, np.ndarray]:
    '''Run the expert on a failure-free world; returns (frames, actions).'''
    rng = np.random.default_rng(traj_seed)
    world = build_world(layout, traj_seed, sim)
    s0 = rng.uniform(0.0, max(0.0, world.path_length - config.min_remaining))
    world = place_robot(world, s0,
                        lateral=rng.uniform(-config.lateral_noise, config.lateral_noise),
                        heading_offset=rng.uniform(-config.heading_noise, config.heading_noise))
    frames, actions = [], []
    for _ in range(config.max_steps):
        if at_route_end(world, expert):
            break
        a = expert_action(world, expert, sim)
        frames.append(render(world, sim))
        actions.append(a.as_array())
        executed = ActionCmd(v=a.v + rng.normal(0.0, config.v_noise),
                             omega=a.omega + rng.normal(0.0, config.omega_noise)).clamped()
        world = step(world, executed, sim)
    return np.array(frames, dtype=np.float32), np.array(actions, dtype=np.float32)


def collect_dataset(n_traj: int,
                    layouts: Sequence[str] = LAYOUTS,
                    seed: int = 0,
                    config: CollectConfig = CollectConfig(),
                    sim: SimConfig = SimConfig()) -> Tuple[TrajectorySet, TrajectorySet]:
    '''Expert demonstrations on failure-free worlds, split into a training set
    and a disjoint held-out calibration set.

    Layouts are assigned round-robin; a seeded permutation picks
    ``round(calib_fraction * n_traj)`` trajectories for calibration.
    '''
    if n_traj < 10:
        raise ValueError(f'n_traj must be at least 10, got {n_traj}')
    for layout in layouts:
        if layout not in LAYOUTS:
            raise ValueError(f'Unknown layout: {layout}')
    n_calib = int(round(config.calib_fraction * n_traj))
    calib_ids = set(np.random.default_rng(seed).permutation(n_traj)[:n_calib].tolist())

    train, calib = TrajectorySet(), TrajectorySet()
    for i in range(n_traj):
        layout = layouts[i % len(layouts)]
        traj_seed = trajectory_seed(seed, i)
        frames, actions = demonstrate(layout, traj_seed, config, sim)
        (calib if i in calib_ids else train).append(frames, actions, traj_seed, layout)
        if i % 10 == 0:
            logging.info(f'trajectory {i}/{n_traj}: {layout}, {len(frames)} steps')
    logging.info(f'Collected {len(train)} train / {len(calib)} calibration trajectories')
    return train, calib
