"""Lifetime-aware uplink scheduling and grouping for machine-type devices."""

from .core import Allocation, NodeState, RadioConfig, db_to_linear, lambert_w0, lifetime, default_radio, transmit_power
from .grouping import GroupingConfig, GroupingOutcome, form_groups, optimal_clients
from .interference import UnderlayScenario, max_group_count, outage_probability
from .lte import LteConfig, algorithm1, default_tbs_table
from .scheduler import ScheduleProblem, ScheduleResult, brute_force_oracle, schedule_maxmin, schedule_noncoop

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "NodeState",
    "RadioConfig",
    "db_to_linear",
    "lambert_w0",
    "lifetime",
    "default_radio",
    "transmit_power",
    "GroupingConfig",
    "GroupingOutcome",
    "form_groups",
    "optimal_clients",
    "UnderlayScenario",
    "max_group_count",
    "outage_probability",
    "LteConfig",
    "algorithm1",
    "default_tbs_table",
    "ScheduleProblem",
    "ScheduleResult",
    "brute_force_oracle",
    "schedule_maxmin",
    "schedule_noncoop",
]
