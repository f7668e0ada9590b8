"""Scenario configuration, simulation loop, campaigns, CSV export and detector replay."""

from .campaign import CampaignResult, campaign_config, highway_base, run_campaign
from .config import (
    AttackEntry,
    ConfigError,
    CoordinatorConfig,
    DetectorConfig,
    LeaderProfile,
    ScenarioConfig,
    config_from_dict,
    load_config,
)
from .export import export_aggregate, export_csv, export_metrics, export_runs, export_trace
from .replay import MalformedTraceError, Overlay, replay_detector
from .sim import TRACE_COLUMNS, RunMetrics, SimulationAbort, run_scenario

__all__ = [
    "AttackEntry", "CampaignResult", "ConfigError", "CoordinatorConfig", "DetectorConfig",
    "LeaderProfile", "MalformedTraceError", "Overlay", "RunMetrics", "ScenarioConfig", "SimulationAbort",
    "TRACE_COLUMNS", "campaign_config", "config_from_dict", "export_aggregate", "export_csv",
    "export_metrics", "export_runs", "export_trace", "highway_base", "load_config",
    "replay_detector", "run_campaign", "run_scenario",
]
