from .dynamics import resolve_collisions, step
from .expert import ExpertConfig, at_route_end, expert_action
from .failures import (DEFAULT_TRIGGER_STEP, FAILURE_KINDS, IRRECOVERABLE, FailureSpec, apply_failure,
                       flood_fill_reachable, inject_failure)
from .render import bin_edges, ground_truth_bins, raycast, render
from .world import LAYOUTS, ActionCmd, DynamicObstacle, SimConfig, WorldState, build_world, place_robot
from .collect import CollectConfig, collect_dataset, demonstrate, trajectory_seed
