"""Window-based admission control and the pipeline stage sequencer.

Time is split into fixed windows of ``window_seconds``; at most one full
pipeline (capture, preprocess, inference, indication) runs per window. Under
the adaptive start rule the device may try up to ``n_attempts`` evenly spaced
start times within the deadline; the fixed rule is the n_attempts=1 special
case. Every attempt made while the supply outputs are up costs one voltage
measurement; attempts at instants where the outputs are down are skipped for
free because the controller is unpowered.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

from .energy import CapacitorSpec
from .errors import DomainError
from .policy import (
    NO_PERSON,
    PERSON,
    ExitDecision,
    ExitTaken,
    InferenceInstance,
    Region,
    evaluate_ex1,
    evaluate_ex2,
    fallback_label,
    policy_i_select,
)

VARIANT_PROPOSED = "proposed"
VARIANT_POLICY_I = "policy_i"
VARIANT_POLICY_II = "policy_ii"
VARIANT_BASELINE = "baseline"
VARIANTS = (VARIANT_PROPOSED, VARIANT_POLICY_I, VARIANT_POLICY_II, VARIANT_BASELINE)

GATING_MOSFET = "mosfet"
GATING_LOAD_SWITCH = "load_switch"
GATINGS = (GATING_MOSFET, GATING_LOAD_SWITCH)


@dataclass(frozen=True)
class ScheduleConfig:
    window_seconds: float
    deadline_seconds: float
    n_attempts: int
    guard_delta: float = 0.0

    def __post_init__(self) -> None:
        if self.window_seconds <= 0:
            raise DomainError("window duration must be positive")
        if self.deadline_seconds < 0:
            raise DomainError("deadline must be >= 0")
        if self.n_attempts < 1 or int(self.n_attempts) != self.n_attempts:
            raise DomainError("n_attempts must be an integer >= 1")
        if self.guard_delta < 0:
            raise DomainError("guard margin must be >= 0")


@dataclass(frozen=True)
class WindowOutcome:
    """What happened in one window.

    ``deferred`` windows never started a pipeline and consumed no input; a
    brownout during an admission measurement still counts as a deferral
    (nothing in flight was lost). ``power_failure`` marks a pipeline that was
    admitted and then aborted below the cutoff, wasting its energy.
    """

    window_index: int
    started_at: Optional[float]
    decision: Optional[ExitDecision]
    energy_spent: float
    deferred: bool
    power_failure: bool
    instance_id: Optional[int] = None
    correct: Optional[bool] = None
    admission_usable: Optional[float] = None
    escalation_usable: Optional[float] = None


def candidate_start_times(t_k: float, cfg: ScheduleConfig) -> List[float]:
    """The n_attempts admission instants of the window starting at t_k."""
    step = cfg.deadline_seconds / cfg.n_attempts
    return [t_k + i * step for i in range(cfg.n_attempts)]

def try_admit(available_usable: float, e_req: float, delta: float) -> bool:
    """True when the usable energy covers the requirement plus margin."""
    if available_usable < 0 or e_req < 0 or delta < 0:
        raise DomainError("admission inputs must be >= 0")
    return available_usable >= e_req + delta

def detect_power_failure(v_c: float, spec: CapacitorSpec) -> bool:
    """True when the voltage has fallen strictly below the cutoff."""
    return v_c < spec.v_off


def _led_stage(prediction: int) -> str:
    return "led_blue" if prediction == PERSON else "led_red"


def run_window(
    window_index: int,
    clock,
    device,
    instance: InferenceInstance,
    variant: str = VARIANT_PROPOSED,
    gating: str = GATING_MOSFET,
) -> WindowOutcome:
    """Attempt one pipeline in the given window.

    ``clock`` is the simulation engine driving the capacitor: it must provide
    ``time``, ``outputs_enabled``, ``usable_energy()``, ``advance_to(t)``,
    ``run_stage(name) -> bool`` (False on power failure),
    ``load_energy_spent`` and ``log_event(label)``. ``device`` is the
    DeviceConfig carrying stage profiles, thresholds and the schedule.

    The instance is consumed only if the pipeline starts (``started_at`` set).
    """
    sched = device.schedule
    delta = sched.guard_delta
    t_k = window_index * sched.window_seconds
    spent0 = clock.load_energy_spent
    clock.log_event(f"window:{window_index}")

    capture = "capture_preprocess" if gating == GATING_MOSFET else "capture_preprocess_load_switch"
    if variant == VARIANT_BASELINE:
        capture = "capture_preprocess_load_switch"

    candidates = candidate_start_times(t_k, sched)
    if variant == VARIANT_BASELINE:
        candidates = candidates[:1]

    started_at = None
    admission_usable = None
    plan = None
    for s in candidates:
        clock.advance_to(s)
        if not clock.outputs_enabled:
            continue
        if not clock.run_stage("measurement"):
            # monitoring brownout before anything was admitted: the window is
            # deferred and the device cold-starts; no pipeline work was lost
            clock.log_event("measurement_brownout")
            return WindowOutcome(
                window_index, None, None, clock.load_energy_spent - spent0,
                deferred=True, power_failure=False,
            )
        avail = clock.usable_energy()
        if variant == VARIANT_POLICY_I:
            d1, d2 = device.depth_requirements(gating)
            selected = policy_i_select(avail, d1 + delta, d2 + delta)
            if selected is not ExitTaken.NONE:
                plan = selected
                admission_usable, started_at = avail, s
        elif variant == VARIANT_BASELINE:
            if try_admit(avail, device.baseline_requirement(), delta):
                admission_usable, started_at = avail, s
        else:
            # reserve the potential escalation measurement on top of the
            # shallow-path requirement: the fallback indication alone cannot
            # absorb that debit, and it is paid before the escalation check
            req = device.budget(gating).e_req_ex1 + device.stage_energy("measurement")
            if try_admit(avail, req, delta):
                admission_usable, started_at = avail, s
        if started_at is not None:
            clock.log_event("admit")
            break

    if started_at is None:
        clock.log_event("defer")
        return WindowOutcome(
            window_index, None, None, clock.load_energy_spent - spent0,
            deferred=True, power_failure=False,
        )

    decision, escalation_usable, failed = _execute_pipeline(
        clock, device, instance, variant, gating, capture, plan
    )
    if failed:
        clock.log_event("power_failure")
    else:
        clock.log_event("exit:" + decision.exit_taken.value)
    correct = None
    if decision is not None and decision.prediction is not None:
        correct = decision.prediction == instance.label
    return WindowOutcome(
        window_index,
        started_at,
        decision,
        clock.load_energy_spent - spent0,
        deferred=False,
        power_failure=failed,
        instance_id=instance.id,
        correct=correct,
        admission_usable=admission_usable,
        escalation_usable=escalation_usable,
    )


def _execute_pipeline(clock, device, instance, variant, gating, capture, plan):
    """Run the admitted pipeline stages; returns (decision, usable2, failed)."""
    failed_outcome = (None, None, True)

    if not clock.run_stage(capture):
        return failed_outcome

    if variant == VARIANT_BASELINE or (variant == VARIANT_POLICY_I and plan is ExitTaken.EX2):
        if not clock.run_stage("inference_ex2"):
            return failed_outcome
        pred = evaluate_ex2(instance.o2)
        if variant == VARIANT_POLICY_I and not clock.run_stage("led_green"):
            return failed_outcome
        if not clock.run_stage(_led_stage(pred)):
            return failed_outcome
        return ExitDecision(ExitTaken.EX2, pred), None, False

    if not clock.run_stage("inference_ex1"):
        return failed_outcome

    if variant == VARIANT_POLICY_I:
        pred = fallback_label(instance.o1)
        if not clock.run_stage(_led_stage(pred)):
            return failed_outcome
        return ExitDecision(ExitTaken.EX1, pred), None, False

    region = evaluate_ex1(instance.o1, device.thresholds)
    if region is not Region.AMBIGUOUS:
        pred = PERSON if region is Region.PERSON else NO_PERSON
        if not clock.run_stage(_led_stage(pred)):
            return failed_outcome
        return ExitDecision(ExitTaken.EX1, pred), None, False

    if not clock.run_stage("measurement"):
        return failed_outcome
    usable2 = clock.usable_energy()
    feasible = variant == VARIANT_POLICY_II or try_admit(
        usable2, device.budget(gating).e_req_escalate, device.schedule.guard_delta
    )
    if feasible:
        if not clock.run_stage("inference_ex1_to_ex2"):
            return None, usable2, True
        pred = evaluate_ex2(instance.o2)
        if not (clock.run_stage("led_green") and clock.run_stage(_led_stage(pred))):
            return None, usable2, True
        return ExitDecision(ExitTaken.EX2, pred, escalation_requested=True), usable2, False

    pred = fallback_label(instance.o1)
    if not clock.run_stage(_led_stage(pred)):
        return None, usable2, True
    decision = ExitDecision(
        ExitTaken.EX1_FALLBACK, pred, escalation_requested=True, energy_denied=True
    )
    return decision, usable2, False
