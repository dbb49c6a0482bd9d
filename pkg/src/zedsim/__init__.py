"""Deterministic simulator of a solar-harvesting camera node that runs a
two-exit person detector under capacitor energy constraints."""

from .config import DeviceConfig, load_config, config_hash
from .energy import (
    CapacitorSpec,
    EnergyBudget,
    StageProfile,
    min_start_voltage,
    required_energy_escalate,
    required_energy_ex1,
    state_energy,
    stored_energy,
    usable_energy,
)
from .pmu import EnergyState, HarvestProfile, PmuMode, harvest_current_at, initial_state, mode_of, step
from .policy import (
    ExitDecision,
    ExitTaken,
    InferenceInstance,
    Region,
    Thresholds,
    decide_policy_ii,
    decide_proposed,
    evaluate_ex1,
    evaluate_ex2,
    fallback_label,
    policy_i_select,
    sweep_thresholds,
)
from .scheduler import (
    ScheduleConfig,
    WindowOutcome,
    candidate_start_times,
    detect_power_failure,
    run_window,
    try_admit,
)
from .sim import (
    PolicyComparison,
    ReplayReport,
    SimConfig,
    SimResult,
    SimTotals,
    compare_policies,
    energy_ledger_residual,
    replay_check,
    simulate,
)
from .traces import (
    GeneratorSpec,
    TraceStats,
    generate_trace,
    load_harvest,
    load_trace,
    save_harvest,
    save_trace,
    trace_statistics,
)

__version__ = "0.1.0"
