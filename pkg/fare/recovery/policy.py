# Copyright (c)  2026  Fare authors
# Apache 2.0

"""
Heuristic recovery: the heatmap is split into left, middle and right column
bins, and a macro-action is chosen to turn away from the flagged side or to
retrace recent motion. After ``t_max_tries`` unsuccessful macro-actions the
robot asks for help and stops for good.
"""

from dataclasses import dataclass, replace
from typing import List, Optional, Tuple, Union

import numpy as np
import torch
from torch import Tensor

from fare.recognition.heatmap import Heatmap
from fare.sim.render import bin_edges
from fare.sim.world import ActionCmd

MACRO_KINDS = ('backtrack', 'rotate_left', 'rotate_right', 'get_help')
BLIND_CHOICES = ('backtrack', 'rotate_left', 'rotate_right')
MODES = ('normal', 'recovering', 'terminated')
RECOVERY_MODES = ('informed', 'blind')


class TerminatedError(RuntimeError):
    """A decision was requested after get_help."""


@dataclass(frozen=True)
class RecoveryConfig:
    tau_pix: float = 0.5
    # a bin is flagged when more than this fraction of its pixels is high;
    # ignored when tau_cnt is set
    tau_cnt_fraction: float = 0.05
    tau_cnt: Optional[float] = None
    t_max_tries: int = 6
    k_clear: int = 3
    cache_size: int = 40
    backtrack_steps: int = 10
    rotate_omega: float = 0.6
    rotate_steps: int = 8
    mode: str = 'informed'

    def validate(self) -> None:
        if self.mode not in RECOVERY_MODES:
            raise ValueError(f'Unknown recovery mode: {self.mode}')
        for name in ('t_max_tries', 'k_clear', 'cache_size', 'backtrack_steps', 'rotate_steps'):
            if getattr(self, name) < 1:
                raise ValueError(f'{name} must be at least 1, got {getattr(self, name)}')
        if not 0.0 <= self.tau_pix < 1.0:
            raise ValueError(f'tau_pix must be in [0, 1), got {self.tau_pix}')


@dataclass(frozen=True)
class BinFlags:
    left: bool
    middle: bool
    right: bool
    counts: Tuple[int, int, int] = (0, 0, 0)

    def as_tuple(self) -> Tuple[bool, bool, bool]:
        return self.left, self.middle, self.right

    @classmethod
    def clear(cls) -> 'BinFlags':
        return cls(False, False, False)


@dataclass(frozen=True)
class MacroAction:
    kind: str
    duration: int = 1

    def __post_init__(self):
        if self.kind not in MACRO_KINDS:
            raise ValueError(f'Unknown macro-action: {self.kind}')
        if self.duration < 1:
            raise ValueError(f'duration must be at least 1, got {self.duration}')

    @property
    def terminal(self) -> bool:
        return self.kind == 'get_help'


@dataclass(frozen=True)
class RecoveryState:
    mode: str = 'normal'
    tries: int = 0
    # most recent passed-through action last
    action_cache: Tuple[ActionCmd, ...] = ()
    consecutive_clear: int = 0


def bin_heatmap(heatmap: Union[Heatmap, Tensor, np.ndarray],
                tau_pix: float = 0.5,
                tau_cnt: Optional[float] = None,
                tau_cnt_fraction: float = 0.05) -> BinFlags:
    '''Flag the image thirds holding many high-valued pixels.

    The map is first divided by its maximum; a pixel is high when the
    normalized value exceeds `tau_pix`. A bin is flagged when its count of
    high pixels exceeds `tau_cnt`, or `tau_cnt_fraction` of the bin's pixels
    when `tau_cnt` is None.
    '''
    values = heatmap.values if isinstance(heatmap, Heatmap) else heatmap
    values = torch.as_tensor(values, dtype=torch.float64)
    if (values < 0).any():
        raise ValueError('bin_heatmap expects a non-negative map')
    peak = values.max().item() if values.numel() else 0.0
    if peak <= 0:
        return BinFlags.clear()
    high = (values / peak) > tau_pix
    edges = bin_edges(values.shape[-1])
    counts, flags = [], []
    for k in range(3):
        count = int(high[..., edges[k]:edges[k + 1]].sum())
        limit = tau_cnt
        if limit is None:
            limit = tau_cnt_fraction * values.shape[-2] * (edges[k + 1] - edges[k])
        counts.append(count)
        flags.append(count > limit)
    return BinFlags(left=flags[0], middle=flags[1], right=flags[2], counts=tuple(counts))


def recovery_success(state: RecoveryState, b_t: bool, config: RecoveryConfig = RecoveryConfig()
                     ) -> Tuple[bool, RecoveryState]:
    '''Count a frame towards a successful recovery; K_clear consecutive clear
    frames bring the state back to normal with the tries reset.'''
    if state.mode != 'recovering':
        raise ValueError(f'recovery_success called in mode {state.mode}')
    if b_t:
        return False, replace(state, consecutive_clear=0)
    clear = state.consecutive_clear + 1
    if clear >= config.k_clear:
        return True, replace(state, mode='normal', tries=0, consecutive_clear=0)
    return False, replace(state, consecutive_clear=clear)


def _informed_choice(flags: BinFlags) -> str:
    if flags.right and not flags.left:
        return 'rotate_left'
    if flags.left and not flags.right:
        return 'rotate_right'
    return 'backtrack'


def _duration(kind: str, state: RecoveryState, config: RecoveryConfig) -> int:
    if kind == 'backtrack':
        return max(1, min(config.backtrack_steps, len(state.action_cache)))
    if kind in ('rotate_left', 'rotate_right'):
        return config.rotate_steps
    return 1


def select_action(b_t: bool,
                  flags: BinFlags,
                  state: RecoveryState,
                  config: RecoveryConfig = RecoveryConfig(),
                  rng: Optional[np.random.Generator] = None) -> Tuple[Optional[MacroAction], RecoveryState]:
    '''Decide the response to one frame.

    Returns:
      The macro-action to execute, or None to pass the policy's action
      through, and the new state.
    Raises:
      TerminatedError: once get_help has been issued.
    '''
    if state.mode == 'terminated':
        raise TerminatedError('Recovery terminated after get_help; no further actions')
    if not b_t:
        if state.mode == 'recovering':
            _, state = recovery_success(state, False, config)
        return None, state

    if state.tries >= config.t_max_tries:
        return MacroAction('get_help'), replace(state, mode='terminated', consecutive_clear=0)
    if config.mode == 'blind':
        if rng is None:
            raise ValueError('blind recovery needs a random generator')
        kind = BLIND_CHOICES[int(rng.integers(len(BLIND_CHOICES)))]
    else:
        kind = _informed_choice(flags)
    macro = MacroAction(kind, _duration(kind, state, config))
    return macro, replace(state, mode='recovering', tries=state.tries + 1, consecutive_clear=0)


def record_action(state: RecoveryState, action: ActionCmd, config: RecoveryConfig = RecoveryConfig()
                  ) -> RecoveryState:
    '''Push a passed-through action into the backtrack ring buffer.'''
    cache = (state.action_cache + (action,))[-config.cache_size:]
    return replace(state, action_cache=cache)


def backtrack_sequence(state: RecoveryState, k: int = 10) -> List[ActionCmd]:
    '''The last `k` cached actions in reverse order with v and omega negated;
    a single stop when the cache is empty.'''
    if not state.action_cache:
        return [ActionCmd.stop()]
    recent = state.action_cache[-k:]
    return [ActionCmd(v=-a.v, omega=-a.omega).clamped(allow_reverse=True) for a in reversed(recent)]


def macro_sequence(macro: MacroAction, state: RecoveryState, config: RecoveryConfig = RecoveryConfig()
                   ) -> Tuple[List[ActionCmd], RecoveryState]:
    '''Expand a macro-action into control steps. Backtracking consumes the
    replayed cache entries.'''
    if macro.kind == 'backtrack':
        steps = backtrack_sequence(state, config.backtrack_steps)
        keep = max(0, len(state.action_cache) - config.backtrack_steps)
        return steps, replace(state, action_cache=state.action_cache[:keep])
    if macro.kind == 'rotate_left':
        return [ActionCmd(0.0, config.rotate_omega)] * macro.duration, state
    if macro.kind == 'rotate_right':
        return [ActionCmd(0.0, -config.rotate_omega)] * macro.duration, state
    return [ActionCmd.stop()], state
