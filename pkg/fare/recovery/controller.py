# Copyright (c)  2026  Fare authors
# Apache 2.0

import csv
import logging
from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Optional

import numpy as np

from fare.common import Pathlike
from fare.recognition.heatmap import Heatmap
from fare.recovery.policy import (BinFlags, MacroAction, RecoveryConfig, RecoveryState, bin_heatmap, macro_sequence,
                                  record_action, select_action)
from fare.sim.world import ActionCmd

EVENT_FIELDS = ('frame', 'b_t', 'left', 'middle', 'right', 'action', 'tries', 'mode')


@dataclass(frozen=True)
class RecoveryEvent:
    frame: int
    b_t: bool
    flags: BinFlags
    action: str
    tries: int
    mode: str

    def as_row(self) -> List[object]:
        return [self.frame, int(self.b_t), int(self.flags.left), int(self.flags.middle), int(self.flags.right),
                self.action, self.tries, self.mode]


class RecoveryController:
    '''Closed-loop wrapper around :func:`select_action`.

    Each call to :meth:`step` returns the command for one control step.
    While a macro-action is being executed its remaining steps are replayed
    and the frame's detection is not acted upon; otherwise a decision is made
    and logged as a :class:`RecoveryEvent`.
    '''

    def __init__(self, config: RecoveryConfig = RecoveryConfig(), seed: int = 0):
        config.validate()
        self.config = config
        self.state = RecoveryState()
        # only consumed in blind mode
        self.rng = np.random.default_rng(seed)
        self.pending: Deque[ActionCmd] = deque()
        self.events: List[RecoveryEvent] = []
        self.recovered_frames: List[int] = []
        self.help_frame: Optional[int] = None

    @property
    def terminated(self) -> bool:
        return self.state.mode == 'terminated'

    @property
    def busy(self) -> bool:
        return bool(self.pending)

    def step(self, frame: int, b_t: bool, heatmap: Optional[Heatmap], policy_action: ActionCmd) -> ActionCmd:
        if self.terminated:
            return ActionCmd.stop()
        if self.pending:
            return self.pending.popleft()

        flags = BinFlags.clear()
        if b_t and heatmap is not None:
            c = self.config
            flags = bin_heatmap(heatmap, c.tau_pix, c.tau_cnt, c.tau_cnt_fraction)
        was_recovering = self.state.mode == 'recovering'
        macro, self.state = select_action(b_t, flags, self.state, self.config, self.rng)
        if was_recovering and self.state.mode == 'normal':
            self.recovered_frames.append(frame)
            logging.debug(f'frame {frame}: recovered')

        if macro is None:
            action = policy_action.clamped()
            self.state = record_action(self.state, action, self.config)
            self._log(frame, b_t, flags, 'pass_through')
            return action

        self._log(frame, b_t, flags, macro.kind)
        if macro.terminal:
            self.help_frame = frame
            logging.debug(f'frame {frame}: get_help after {self.state.tries} tries')
        steps, self.state = macro_sequence(macro, self.state, self.config)
        self.pending.extend(steps[1:])
        return steps[0]

    def _log(self, frame: int, b_t: bool, flags: BinFlags, action: str) -> None:
        self.events.append(RecoveryEvent(frame=frame, b_t=bool(b_t), flags=flags, action=action,
                                         tries=self.state.tries, mode=self.state.mode))


def write_recovery_events(filename: Pathlike, events: List[RecoveryEvent], trial_ids: Optional[List[str]] = None
                          ) -> None:
    '''Write decision events as CSV; with `trial_ids`, a leading trial column
    tags every row.'''
    with open(filename, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        header = list(EVENT_FIELDS)
        if trial_ids is not None:
            header = ['trial'] + header
        writer.writerow(header)
        for i, event in enumerate(events):
            row = event.as_row()
            if trial_ids is not None:
                row = [trial_ids[i]] + row
            writer.writerow(row)
