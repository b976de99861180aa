from .diagnostics import measure_gradient_norms, measure_weight_norms
from .trainer import EpochStats, TrainConfig, check_dataset, train_model, write_loss_curve
