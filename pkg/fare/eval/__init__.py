from .detectors import METHODS, Detectors, fit_bands, fit_method_band
from .evaluate import MethodResult, TrajectoryDetections, evaluate
from .metrics import RocCurve, per_bin_score, roc_auc, side_accuracy
from .report import write_eval_report, write_metrics_csv, write_roc_csv, write_trials_report
from .testset import EvalTrajectory, LabeledFrame, build_test_set
from .trials import TrialConfig, TrialResult, aggregate, run_trial, run_trials, trial_jobs
