# Copyright (c)  2026  Fare authors
# Apache 2.0

import csv
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch

from fare.common import Pathlike
from fare.eval.evaluate import MethodResult, detection_rates, side_bins
from fare.eval.metrics import RocCurve, roc_auc, side_accuracy
from fare.eval.trials import TrialResult, TrialSummary, aggregate, pooled_recovery_time
from fare.recognition.heatmap import write_pgm
from fare.recovery.controller import RecoveryEvent, write_recovery_events
from fare.sim.failures import FAILURE_KINDS

METRICS_FIELDS = ('method', 'failure_kind', 'det_sr', 'han_sr', 'mean_time_s', 'n')
BIN_NAMES = ('left', 'middle', 'right')


def fmt(x: Optional[float]) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ''
    return f'{x:.6f}'


def _writer(f):
    return csv.writer(f, lineterminator='\n')


def write_metrics_csv(filename: Pathlike, rows: Iterable[TrialSummary]) -> None:
    with open(filename, 'w', newline='') as f:
        writer = _writer(f)
        writer.writerow(METRICS_FIELDS)
        for r in rows:
            writer.writerow([r.method, r.failure_kind, fmt(r.det_sr), fmt(r.han_sr), fmt(r.mean_time_s), r.n])


def write_roc_csv(filename: Pathlike, curve: Optional[RocCurve]) -> None:
    '''ROC points as (fpr, tpr, threshold); header only without a curve.'''
    with open(filename, 'w', newline='') as f:
        writer = _writer(f)
        writer.writerow(['fpr', 'tpr', 'threshold'])
        if curve is not None:
            for fpr, tpr, thr in zip(curve.fpr, curve.tpr, curve.thresholds):
                writer.writerow([f'{fpr:.6f}', f'{tpr:.6f}', f'{thr:.9g}'])


def write_trials_csv(filename: Pathlike, results: Sequence[TrialResult]) -> None:
    with open(filename, 'w', newline='') as f:
        writer = _writer(f)
        writer.writerow(['trial', 'recovery_mode', 'failure_kind', 'side', 'layout', 'world_seed', 'recoverable',
                         'detected', 'handled', 'detect_frame', 'recover_frame', 'help_frame', 'recovery_time_s'])
        for r in results:
            writer.writerow([r.trial_id, r.recovery_mode, r.failure_kind, r.side, r.layout, r.world_seed,
                             int(r.recoverable), int(r.detected), int(r.handled),
                             '' if r.detect_frame is None else r.detect_frame,
                             '' if r.recover_frame is None else r.recover_frame,
                             '' if r.help_frame is None else r.help_frame,
                             fmt(r.recovery_time_s)])


def _safe_roc(scores: np.ndarray, labels: np.ndarray, what: str) -> Tuple[Optional[RocCurve], Optional[float]]:
    try:
        return roc_auc(scores, labels)
    except ValueError:
        logging.warning(f'{what}: only one class present, no ROC curve')
        return None, None


def write_eval_report(out_dir: Pathlike, results: Dict[str, MethodResult]) -> List[str]:
    '''Write the detection and recognition results of every method:
    metrics.csv, roc_<method>.csv, bins_<method>_<k>.csv for methods with
    heatmaps, summary.txt and PGM snapshots of the first detected frame of
    every failure trajectory. Returns the summary lines.'''
    out_dir = Path(out_dir)
    (out_dir / 'heatmaps').mkdir(parents=True, exist_ok=True)
    metric_rows, summary = [], []
    for method, result in results.items():
        for kind, rate, n in detection_rates(result, FAILURE_KINDS + ('none',)):
            metric_rows.append(TrialSummary(method=method, failure_kind=kind, det_sr=rate, han_sr=math.nan,
                                            mean_time_s=math.nan, n=n))
        scores = result.concat('scores')
        ood = result.concat('ood')
        curve, area = _safe_roc(scores, ood, method)
        write_roc_csv(out_dir / f'roc_{method}.csv', curve)

        normal = [t for t in result.trajectories if t.trigger_step is None]
        frame_fpr = float(np.mean(np.concatenate([t.detected for t in normal]))) if normal else math.nan
        summary.append(f'{method}: auc={fmt(area)} frame_fpr={fmt(frame_fpr)} '
                       f'band_T={result.band.T} band_w={result.band.w:.6g}')

        if result.trajectories and result.trajectories[0].bin_sums is not None:
            per_bin = np.concatenate([t.per_bin for t in result.trajectories])
            gt = result.concat('gt_bins')
            bin_aucs = []
            for k in range(3):
                curve, area = _safe_roc(per_bin[:, k], gt[:, k], f'{method} bin {k}')
                write_roc_csv(out_dir / f'bins_{method}_{k}.csv', curve)
                bin_aucs.append(f'{BIN_NAMES[k]}={fmt(area)}')
            sides = np.concatenate([side_bins(t) for t in result.trajectories])
            acc = side_accuracy(result.concat('detected'), result.concat('bin_sums'), sides)
            summary.append(f'{method}: bin_auc {" ".join(bin_aucs)} side_accuracy={fmt(acc)}')
            for t in result.trajectories:
                if t.snapshot is not None:
                    name = f'{method}_traj{t.trajectory_id:04d}_frame{t.first_detection:03d}.pgm'
                    write_pgm(out_dir / 'heatmaps' / name, torch.from_numpy(t.snapshot))

    write_metrics_csv(out_dir / 'metrics.csv', metric_rows)
    for r in metric_rows:
        summary.append(f'{r.method:8s} {r.failure_kind:22s} det_sr={r.det_sr:6.2f} n={r.n}')
    (out_dir / 'summary.txt').write_text('\n'.join(summary) + '\n')
    logging.info(f'Wrote evaluation report to {out_dir}')
    return summary


def write_trials_report(out_dir: Pathlike,
                        results: Dict[str, Sequence[TrialResult]],
                        events: Dict[str, Sequence[Tuple[str, RecoveryEvent]]]) -> List[str]:
    '''Write trials.csv, recovery_events.csv, metrics.csv and summary.txt
    for trial runs keyed by recovery mode.'''
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    all_results = [r for mode in results for r in results[mode]]
    write_trials_csv(out_dir / 'trials.csv', all_results)
    tagged = [(f'{mode}/{trial}', e) for mode in events for trial, e in events[mode]]
    write_recovery_events(out_dir / 'recovery_events.csv', [e for _, e in tagged], [t for t, _ in tagged])

    rows = [row for mode in results for row in aggregate(results[mode], f'fare-{mode}')]
    write_metrics_csv(out_dir / 'metrics.csv', rows)
    summary = [f'{"method":14s} {"failure_kind":22s} {"det_sr":>7s} {"han_sr":>7s} {"time_s":>7s} {"n":>3s}']
    for r in rows:
        time_s = 'n/a' if math.isnan(r.mean_time_s) else f'{r.mean_time_s:.2f}'
        summary.append(f'{r.method:14s} {r.failure_kind:22s} {r.det_sr:7.2f} {r.han_sr:7.2f} {time_s:>7s} {r.n:3d}')
    for mode in results:
        summary.append(f'fare-{mode}: pooled recovery time over recoverable kinds '
                       f'{fmt(pooled_recovery_time(results[mode]))} s')
    (out_dir / 'summary.txt').write_text('\n'.join(summary) + '\n')
    logging.info(f'Wrote trial report to {out_dir}')
    return summary
