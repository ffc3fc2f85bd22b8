"""feedershare: energy-community surplus allocation simulator.

Simulates collective self-consumption under feeder-aware and
feeder-agnostic allocation strategies with equal, proportional and
rank-based sharing coefficients (static or dynamic), settles the results
against a flat tariff with feeder-dependent network discounts, and emits
community / feeder / participant reports.
"""

__version__ = "0.1.0"

from .model import (
    AllocationOutcome,
    CommunityConfig,
    ConfigError,
    IntervalSeries,
    Method,
    NetPosition,
    Participant,
    ParticipantProfile,
    Role,
    Scheme,
    Strategy,
    Tariff,
    config_from_json,
    config_to_json,
    validate_config,
)
from .allocation import (
    AllocationRules,
    CommunityLayout,
    Pool,
    PhaseResult,
    SimulationResult,
    allocate_interval_feeder_agnostic,
    allocate_interval_feeder_aware,
    allocate_pool,
    build_rules,
    net_positions,
    simulate,
)
from .settlement import Benefit, MoneyLine, SettlementError, benefits, settle_result
from .ingestion import (
    IngestionError,
    SyntheticSpec,
    generate_synthetic,
    load_timeseries,
    resample,
    write_timeseries,
)
from .reporting import (
    CheckResult,
    CombinationReport,
    OutcomePatch,
    build_report,
    combination_order,
    run_combinations,
    verify_scenario,
    write_reports,
)

__all__ = [name for name in dir() if not name.startswith("_")]
