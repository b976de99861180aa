from .band import (InsufficientSegmentsError, PredictionBand, ScoreSegment, chunk, conformal_quantile, coverage,
                   fit_band, is_ood, load_band, save_band)
