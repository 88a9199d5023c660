"""Collective self-consumption community simulator.

Local energy market allocation mechanisms, French billing and tax rules,
fairness indicators, synthetic community generation and the PV-uptake
sweep harness.
"""

__version__ = "0.1.0"

from .allocation import (
    DOUBLE_AUCTION,
    GLASS_FILLING,
    MECHANISMS,
    PRIORITY_GLASS_FILLING,
    PRO_RATA,
    AllocationOutcome,
    PriorityState,
    allocate_double_auction,
    allocate_glass_filling,
    allocate_prioritized_glass_filling,
    allocate_pro_rata,
    clearing_price,
    community_energy,
    run_mechanism,
)
from .billing import (
    BillBreakdown,
    BillingContext,
    ask_price,
    bid_price,
    bill_with_csc,
    bill_without_csc,
    utility,
)
from .core import (
    EPSILON_E,
    Community,
    EnergySeries,
    FiscalStatus,
    Member,
    TariffSchedule,
    TimeAxis,
    TimeOfUsePrice,
    ValidationReport,
    member_role,
    net_injection,
    validate_community,
    validate_tariffs,
)
from .fairness import (
    FairnessReport,
    community_contributions,
    compute_report,
    contribution,
    jain_index,
    meritocratic_index,
    min_max_ratio,
    normalize_reports,
    social_welfare,
    weighted_utility,
)
from .harness import SweepResult, fairness_matrix, run_sweep, savings_profile
from .scenario import (
    ScenarioConfig,
    generate_community,
    ingest_meter_csv,
    synthetic_load_profile,
    synthetic_pv_profile,
)
