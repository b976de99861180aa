from .controller import RecoveryController, RecoveryEvent, write_recovery_events
from .policy import (MACRO_KINDS, BinFlags, MacroAction, RecoveryConfig, RecoveryState, TerminatedError,
                     backtrack_sequence, bin_heatmap, macro_sequence, record_action, recovery_success, select_action)
