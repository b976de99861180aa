# Copyright (c)  2026  Fare authors
# Apache 2.0

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from fare.conformal.band import PredictionBand
from fare.eval.detectors import HEATMAP_METHODS, Detectors
from fare.eval.metrics import per_bin_scores
from fare.eval.testset import EvalTrajectory
from fare.sim.render import bin_edges

SIDE_BINS = {'left': 0, 'front': 1, 'right': 2}


@dataclass
class TrajectoryDetections:
    trajectory_id: int
    failure_kind: str
    side: Optional[str]
    trigger_step: Optional[int]
    scores: np.ndarray  # (L,)
    detected: np.ndarray  # (L,) b_t
    ood: np.ndarray  # (L,)
    gt_bins: np.ndarray  # (L, 3)
    bin_sums: Optional[np.ndarray] = None  # (L, 3)
    # first detection at or after the trigger step, and its heatmap
    first_detection: Optional[int] = None
    snapshot: Optional[np.ndarray] = None

    @property
    def any_detection(self) -> bool:
        '''Failure trajectories count as detected only from the trigger step
        on; normal ones on any frame.'''
        return self.first_detection is not None if self.trigger_step is not None else bool(self.detected.any())

    @property
    def per_bin(self) -> Optional[np.ndarray]:
        if self.bin_sums is None:
            return None
        return per_bin_scores(self.detected, self.bin_sums)


@dataclass
class MethodResult:
    method: str
    band: PredictionBand
    trajectories: List[TrajectoryDetections] = field(default_factory=list)

    def concat(self, name: str) -> np.ndarray:
        return np.concatenate([getattr(t, name) for t in self.trajectories])


def _bin_sums(maps: np.ndarray) -> np.ndarray:
    edges = bin_edges(maps.shape[-1])
    return np.stack([maps[..., edges[k]:edges[k + 1]].sum(axis=(1, 2)) for k in range(3)], axis=1)


def detect_trajectory(detectors: Detectors, method: str, band: PredictionBand,
                      traj: EvalTrajectory) -> TrajectoryDetections:
    with_maps = method in HEATMAP_METHODS
    out = detectors.score(method, traj.frames, with_heatmaps=with_maps)
    detected = np.array([out.scores[t] > band.upper(t) for t in range(len(out.scores))], dtype=bool)
    trigger = traj.failure.trigger_step if traj.failure is not None else None
    result = TrajectoryDetections(trajectory_id=traj.trajectory_id,
                                  failure_kind=traj.failure_kind,
                                  side=traj.failure.side if traj.failure is not None else None,
                                  trigger_step=trigger,
                                  scores=out.scores,
                                  detected=detected,
                                  ood=traj.ood,
                                  gt_bins=traj.gt_bins)
    if trigger is not None:
        hits = np.nonzero(detected[trigger:])[0]
        if len(hits):
            result.first_detection = int(trigger + hits[0])
    if out.heatmaps is not None:
        result.bin_sums = _bin_sums(out.heatmaps)
        if result.first_detection is not None:
            result.snapshot = out.heatmaps[result.first_detection]
    return result


def evaluate(test_set: Sequence[EvalTrajectory],
             detectors: Detectors,
             bands: Dict[str, PredictionBand],
             methods: Sequence[str]) -> Dict[str, MethodResult]:
    '''Score every test frame with every method and threshold it with the
    method's band.'''
    detectors.check(methods)
    results = {}
    for method in methods:
        if method not in bands:
            raise ValueError(f'No band for method {method}')
        result = MethodResult(method=method, band=bands[method])
        for traj in test_set:
            result.trajectories.append(detect_trajectory(detectors, method, bands[method], traj))
        n_det = sum(t.any_detection for t in result.trajectories if t.trigger_step is not None)
        logging.info(f'{method}: detected {n_det} failure trajectories')
        results[method] = result
    return results


def side_bins(traj: TrajectoryDetections) -> np.ndarray:
    '''Per-frame index of the bin holding a sided failure (-1 elsewhere).
    Scored for dynamic obstacles, which approach from a known side.'''
    side = np.full(len(traj.scores), -1)
    if traj.failure_kind == 'dynamic_obstacle' and traj.side in ('left', 'right'):
        side[traj.trigger_step:] = SIDE_BINS[traj.side]
    return side


def detection_rates(result: MethodResult, kinds: Sequence[str]) -> List[Tuple[str, float, int]]:
    '''(failure kind, detection rate in percent, trajectories) per kind;
    kind "none" gives the false detection rate of normal trajectories.'''
    rows = []
    for kind in kinds:
        trajs = [t for t in result.trajectories if t.failure_kind == kind]
        if not trajs:
            continue
        rows.append((kind, 100.0 * sum(t.any_detection for t in trajs) / len(trajs), len(trajs)))
    return rows
