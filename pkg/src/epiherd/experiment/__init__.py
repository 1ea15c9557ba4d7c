"""Experiment designs, runners, statistics and reporting."""

from .calibrate import Check, calibrate, ordering_checks
from .design import ConditionKey, FactorialDesign, desk_condition, episode_seed
from .report import emit_report, read_tsv, write_summaries_csv
from .runner import ConditionSummary, run_condition, run_conditions, run_factorial, scaling_sweep, theta_sweep
from .stats import benjamini_hochberg, compare_protocols, mann_whitney_u, two_proportion_z

__all__ = [
    "Check", "ConditionKey", "ConditionSummary", "FactorialDesign", "benjamini_hochberg", "calibrate",
    "compare_protocols", "desk_condition", "emit_report", "episode_seed", "mann_whitney_u", "ordering_checks",
    "read_tsv", "run_condition", "run_conditions", "run_factorial", "scaling_sweep", "theta_sweep",
    "two_proportion_z", "write_summaries_csv",
]
