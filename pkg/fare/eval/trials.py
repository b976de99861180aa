# Copyright (c)  2026  Fare authors
# Apache 2.0

"""
Closed-loop trials: the learned policy drives from the start of a route, a
failure is injected at the trigger step and the recovery controller reacts
to the policy's detections until the failure is handled or the budget runs
out.
"""

import logging
import math
from dataclasses import dataclass, replace
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np

from fare.conformal.band import PredictionBand
from fare.eval.parallel import parallel_map
from fare.models.policy import VibPolicy, policy_step
from fare.recovery.controller import RecoveryController, RecoveryEvent
from fare.recovery.policy import RecoveryConfig
from fare.sim.dynamics import step
from fare.sim.failures import DEFAULT_TRIGGER_STEP, FAILURE_KINDS, FailureSpec, inject_failure
from fare.sim.render import render
from fare.sim.world import LAYOUTS, SimConfig, build_world

TRIAL_SEED_OFFSET = 20_000_000


@dataclass(frozen=True)
class TrialConfig:
    n_per_failure: int = 10
    seed: int = 0
    trigger_step: int = DEFAULT_TRIGGER_STEP
    # control steps allowed after the trigger (30 s)
    budget_steps: int = 300
    # route progress past the detection point that counts as resumed navigation
    progress_threshold: float = 2.0
    layouts: Tuple[str, ...] = LAYOUTS
    # seeds the random macro-action choice of blind recovery; defaults to seed
    blind_seed: Optional[int] = None


@dataclass
class TrialResult:
    trial_id: str
    failure_kind: str
    side: str
    layout: str
    world_seed: int
    recovery_mode: str
    recoverable: bool
    detected: bool
    handled: bool
    detect_frame: Optional[int] = None
    recover_frame: Optional[int] = None
    help_frame: Optional[int] = None
    steps_per_second: int = 10

    @property
    def recovery_time_s(self) -> Optional[float]:
        '''Seconds from detection to recovery (recoverable kinds) or to the
        help request (irrecoverable kinds), for handled trials.'''
        if not self.handled or self.detect_frame is None:
            return None
        end = self.recover_frame if self.recoverable else self.help_frame
        return (end - self.detect_frame) / self.steps_per_second


@dataclass(frozen=True)
class TrialJob:
    trial_id: str
    spec: FailureSpec
    layout: str
    world_seed: int
    blind_seed: int


def trial_jobs(config: TrialConfig) -> List[TrialJob]:
    '''The trial schedule: a function of the config only, so informed and
    blind runs see identical worlds and failures.'''
    jobs = []
    blind_base = config.seed if config.blind_seed is None else config.blind_seed
    for k, kind in enumerate(FAILURE_KINDS):
        for i in range(config.n_per_failure):
            side = 'front' if kind == 'blocked_dead_end' else ('left', 'right')[i % 2]
            if kind == 'blackout':
                side = 'left'
            index = k * config.n_per_failure + i
            jobs.append(TrialJob(trial_id=f'{kind}-{i}',
                                 spec=FailureSpec(kind, config.trigger_step, side=side),
                                 layout=config.layouts[index % len(config.layouts)],
                                 world_seed=TRIAL_SEED_OFFSET + config.seed * 100003 + index,
                                 blind_seed=blind_base * 100003 + index))
    return jobs


def run_trial(job: TrialJob,
              policy: VibPolicy,
              band: PredictionBand,
              recovery: RecoveryConfig = RecoveryConfig(),
              config: TrialConfig = TrialConfig(),
              sim: SimConfig = SimConfig()) -> Tuple[TrialResult, List[RecoveryEvent]]:
    world = build_world(job.layout, job.world_seed, sim)
    world = inject_failure(world, job.spec, sim)
    controller = RecoveryController(recovery, seed=job.blind_seed)
    result = TrialResult(trial_id=job.trial_id, failure_kind=job.spec.kind, side=job.spec.side, layout=job.layout,
                         world_seed=job.world_seed, recovery_mode=recovery.mode,
                         recoverable=job.spec.recoverable, detected=False, handled=False,
                         steps_per_second=sim.steps_per_second)
    detect_progress = None
    recovered = False
    for t in range(config.trigger_step + config.budget_steps):
        out = policy_step(render(world, sim), policy, band, t)
        if out.is_ood and t >= config.trigger_step and result.detect_frame is None:
            result.detect_frame = t
            detect_progress = world.progress
        action = controller.step(t, out.is_ood, out.heatmap, out.action)
        if controller.terminated:
            result.help_frame = controller.help_frame
            break
        if result.detect_frame is not None and not recovered:
            late = [f for f in controller.recovered_frames if f > result.detect_frame]
            if late:
                recovered = True
                result.recover_frame = late[0]
        if recovered and world.progress - detect_progress >= config.progress_threshold:
            break
        world = step(world, action, sim)

    result.detected = result.detect_frame is not None
    if result.recoverable:
        result.handled = (result.detected and recovered and result.help_frame is None
                          and world.progress - detect_progress >= config.progress_threshold)
    else:
        result.handled = (result.detected and result.help_frame is not None
                          and result.help_frame >= result.detect_frame)
    logging.debug(f'{job.trial_id}: detected={result.detected} handled={result.handled}')
    return result, controller.events


def run_trials(policy: VibPolicy,
               band: PredictionBand,
               recovery_mode: str = 'informed',
               config: TrialConfig = TrialConfig(),
               recovery: RecoveryConfig = RecoveryConfig(),
               sim: SimConfig = SimConfig()) -> Tuple[List[TrialResult], List[Tuple[str, RecoveryEvent]]]:
    '''Run `n_per_failure` trials of every failure kind.

    Returns:
      The trial results in schedule order and the recovery events tagged
      with their trial id.
    '''
    recovery = replace(recovery, mode=recovery_mode)
    recovery.validate()
    jobs = trial_jobs(config)
    outputs = parallel_map(partial(run_trial, policy=policy, band=band, recovery=recovery, config=config, sim=sim),
                           jobs)
    results = [r for r, _ in outputs]
    events = [(job.trial_id, e) for job, (_, evs) in zip(jobs, outputs) for e in evs]
    return results, events


@dataclass
class TrialSummary:
    method: str
    failure_kind: str
    det_sr: float
    han_sr: float
    mean_time_s: float
    n: int


def aggregate(results: Sequence[TrialResult], method: str) -> List[TrialSummary]:
    '''Per failure kind: detection and handling success rates in percent of
    all trials, and the mean recovery time of handled trials (NaN if none).'''
    rows = []
    for kind in FAILURE_KINDS:
        trials = [r for r in results if r.failure_kind == kind]
        if not trials:
            continue
        times = [r.recovery_time_s for r in trials if r.recovery_time_s is not None]
        rows.append(TrialSummary(method=method,
                                 failure_kind=kind,
                                 det_sr=100.0 * sum(r.detected for r in trials) / len(trials),
                                 han_sr=100.0 * sum(r.handled for r in trials) / len(trials),
                                 mean_time_s=float(np.mean(times)) if times else math.nan,
                                 n=len(trials)))
    return rows


def pooled_recovery_time(results: Sequence[TrialResult]) -> float:
    '''Mean recovery time over handled trials of recoverable kinds.'''
    times = [r.recovery_time_s for r in results if r.recoverable and r.recovery_time_s is not None]
    return float(np.mean(times)) if times else math.nan
