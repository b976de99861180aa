from .trajectories import TrajectorySet, load_trajectories, save_trajectories
from .datamodule import NavDataModule, pairs_dataloader, pairs_dataset
