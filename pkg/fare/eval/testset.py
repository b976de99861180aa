# Copyright (c)  2026  Fare authors
# Apache 2.0

import logging
from dataclasses import dataclass
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np

from fare.eval.parallel import parallel_map
from fare.sim.dynamics import step
from fare.sim.expert import expert_action
from fare.sim.failures import DEFAULT_TRIGGER_STEP, FailureSpec, inject_failure
from fare.sim.render import ground_truth_bins, render
from fare.sim.world import LAYOUTS, SimConfig, build_world

# keeps test worlds disjoint from the demonstration worlds of the same seed
TEST_SEED_OFFSET = 10_000_000

# the three failure families of the test set; blocked paths alternate
# between local minima and dead-ends
TEST_FAILURE_FAMILIES = ('blackout', 'blocked', 'dynamic_obstacle')


@dataclass(frozen=True)
class LabeledFrame:
    trajectory_id: int
    frame: int
    ood: bool
    gt_bins: Tuple[bool, bool, bool]


@dataclass
class EvalTrajectory:
    trajectory_id: int
    layout: str
    seed: int
    failure: Optional[FailureSpec]
    frames: np.ndarray  # (L, C, H, W), float32
    labels: List[LabeledFrame]

    @property
    def failure_kind(self) -> str:
        return self.failure.kind if self.failure is not None else 'none'

    @property
    def ood(self) -> np.ndarray:
        return np.array([f.ood for f in self.labels], dtype=bool)

    @property
    def gt_bins(self) -> np.ndarray:
        return np.array([f.gt_bins for f in self.labels], dtype=bool).reshape(-1, 3)


def failure_schedule(n_fail: int, trigger_step: int = DEFAULT_TRIGGER_STEP) -> List[FailureSpec]:
    '''`n_fail` failures spread evenly over the three families, in
    round-robin order. Sided failures alternate left and right.'''
    specs = []
    for i in range(n_fail):
        family = TEST_FAILURE_FAMILIES[i % 3]
        occurrence = i // 3
        side = ('left', 'right')[occurrence % 2]
        if family == 'blackout':
            specs.append(FailureSpec('blackout', trigger_step))
        elif family == 'blocked':
            if occurrence % 2 == 0:
                lm_side = ('left', 'right')[occurrence // 2 % 2]
                specs.append(FailureSpec('blocked_local_minima', trigger_step, side=lm_side))
            else:
                specs.append(FailureSpec('blocked_dead_end', trigger_step, side='front'))
        else:
            specs.append(FailureSpec('dynamic_obstacle', trigger_step, side=side))
    return specs


def simulate_test_trajectory(job: Tuple[int, str, int, Optional[FailureSpec]],
                             length: int = 100,
                             sim: SimConfig = SimConfig()) -> EvalTrajectory:
    '''Drive the expert from the start of the route for `length` steps,
    injecting the failure (if any) at its trigger step.'''
    trajectory_id, layout, seed, failure = job
    world = build_world(layout, seed, sim)
    if failure is not None:
        world = inject_failure(world, failure, sim)
    frames, labels = [], []
    for t in range(length):
        frames.append(render(world, sim).astype(np.float32))
        ood = failure is not None and t >= failure.trigger_step
        bins = ground_truth_bins(world, sim) if ood else (False, False, False)
        labels.append(LabeledFrame(trajectory_id=trajectory_id, frame=t, ood=ood, gt_bins=bins))
        world = step(world, expert_action(world, sim=sim), sim)
    return EvalTrajectory(trajectory_id=trajectory_id, layout=layout, seed=seed, failure=failure,
                          frames=np.stack(frames), labels=labels)


def build_test_set(n_fail: int = 90,
                   n_normal: int = 90,
                   seed: int = 0,
                   layouts: Sequence[str] = LAYOUTS,
                   length: int = 100,
                   trigger_step: int = DEFAULT_TRIGGER_STEP,
                   sim: SimConfig = SimConfig()) -> List[EvalTrajectory]:
    '''Labeled evaluation trajectories: `n_fail` with a single failure at
    `trigger_step` followed by `n_normal` failure-free ones.

    Frames from the trigger step onward in failure trajectories are OOD; their
    ground-truth bins are the image thirds showing injected geometry (all
    three during a blackout).
    '''
    if trigger_step >= length:
        raise ValueError(f'trigger_step {trigger_step} must be smaller than the length {length}')
    failures = failure_schedule(n_fail, trigger_step) + [None] * n_normal
    jobs = [(i, layouts[i % len(layouts)], TEST_SEED_OFFSET + seed * 100003 + i, failure)
            for i, failure in enumerate(failures)]
    trajs = parallel_map(partial(simulate_test_trajectory, length=length, sim=sim), jobs)
    logging.info(f'Built test set: {n_fail} failure and {n_normal} normal trajectories of {length} steps')
    return trajs
