"""Capacitor-buffer and pipeline-stage energy arithmetic.

All quantities are SI (joules, volts, farads, amps, seconds). The storage
element is an ideal capacitor, E = C*v^2/2. Only the share stored above the
supply cutoff voltage ``v_off`` counts as usable: the power management unit
shuts the outputs down at that floor, so energy below it can never reach the
load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import ConfigError, DomainError, UnreachableRequirementError


@dataclass(frozen=True)
class CapacitorSpec:
    """Storage capacitor plus the three supply thresholds acting on it."""

    capacitance_farads: float
    v_off: float
    v_on: float
    v_max: float

    def __post_init__(self) -> None:
        if self.capacitance_farads <= 0:
            raise DomainError(f"capacitance must be positive, got {self.capacitance_farads}")
        if not (0 < self.v_off < self.v_on < self.v_max):
            raise DomainError(
                "thresholds must satisfy 0 < v_off < v_on < v_max, got "
                f"v_off={self.v_off}, v_on={self.v_on}, v_max={self.v_max}"
            )

    @property
    def energy_floor(self) -> float:
        """Energy stored at v_off; reserved, never available to the load."""
        return 0.5 * self.capacitance_farads * self.v_off**2

    @property
    def energy_max(self) -> float:
        """Energy stored at the charge ceiling v_max."""
        return 0.5 * self.capacitance_farads * self.v_max**2


@dataclass(frozen=True)
class StageProfile:
    """Measured load profile of one pipeline state at the regulated rail.

    The energy of the stage is exactly supply_volts * duration_seconds *
    current_amps (see :func:`state_energy`); current is the energy-equivalent
    mean over the stage.
    """

    name: str
    current_amps: float
    duration_seconds: float
    supply_volts: float = 3.3

    def __post_init__(self) -> None:
        if self.current_amps < 0:
            raise DomainError(f"stage {self.name!r}: current must be >= 0")
        if self.duration_seconds < 0:
            raise DomainError(f"stage {self.name!r}: duration must be >= 0")
        if self.supply_volts <= 0:
            raise DomainError(f"stage {self.name!r}: supply voltage must be positive")

    @property
    def power_watts(self) -> float:
        return self.supply_volts * self.current_amps


@dataclass(frozen=True)
class EnergyBudget:
    """Admission and escalation requirements for one pipeline run.

    ``e1``/``e2`` are the bare inference energies of the shallow and deep
    exits; the ``e_req_*`` fields add capture and indication overheads.
    ``guard_delta`` is the safety margin added on top of every comparison.
    """

    e_req_ex1: float
    e_req_escalate: float
    e1: float
    e2: float
    guard_delta: float = 0.0

    def __post_init__(self) -> None:
        for field in ("e_req_ex1", "e_req_escalate", "e1", "e2", "guard_delta"):
            if getattr(self, field) < 0:
                raise DomainError(f"{field} must be >= 0")
        if self.e1 > self.e2:
            raise DomainError(f"e1 ({self.e1}) must not exceed e2 ({self.e2})")
        if self.e_req_ex1 < self.e1:
            raise DomainError("e_req_ex1 must cover at least the shallow inference energy")


def stored_energy(spec: CapacitorSpec, v_c: float) -> float:
    """Instantaneous energy stored at capacitor voltage ``v_c``."""
    if not 0 <= v_c <= spec.v_max:
        raise DomainError(f"voltage {v_c} outside [0, {spec.v_max}]")
    return 0.5 * spec.capacitance_farads * v_c**2

def usable_energy(spec: CapacitorSpec, v_c: float) -> float:
    """Energy available above the v_off floor; 0 when v_c is at or below it."""
    if v_c < 0:
        raise DomainError(f"voltage {v_c} is negative")
    if v_c <= spec.v_off:
        return 0.0
    return 0.5 * spec.capacitance_farads * (v_c**2 - spec.v_off**2)

def state_energy(profile: StageProfile) -> float:
    """Energy drawn by one run of the stage: supply * duration * current."""
    return profile.supply_volts * profile.duration_seconds * profile.current_amps


def _led_worst(led_options: Iterable[Optional[StageProfile]]) -> float:
    energies = [state_energy(p) for p in led_options if p is not None]
    if not energies:
        raise ConfigError("at least one indication LED profile is required")
    return max(energies)


def required_energy_ex1(
    capture: Optional[StageProfile],
    inference_ex1: Optional[StageProfile],
    led_options: Iterable[Optional[StageProfile]],
) -> float:
    """Energy needed for a full run that exits at the shallow head.

    Covers capture+preprocess, shallow inference, and result indication. The
    LED colour is unknown at admission time, so the worst case over
    ``led_options`` is charged.
    """
    if capture is None:
        raise ConfigError("missing capture/preprocess stage profile")
    if inference_ex1 is None:
        raise ConfigError("missing shallow-inference stage profile")
    return state_energy(capture) + state_energy(inference_ex1) + _led_worst(led_options)


def required_energy_escalate(
    escalation: Optional[StageProfile],
    led_green: Optional[StageProfile],
    led_options: Iterable[Optional[StageProfile]],
) -> float:
    """Energy needed to continue from the shallow to the deep exit.

    Covers the remaining inference segment, the completion (green) LED, and
    the worst-case result LED.
    """
    if escalation is None:
        raise ConfigError("missing escalation-inference stage profile")
    if led_green is None:
        raise ConfigError("missing green LED stage profile")
    return state_energy(escalation) + state_energy(led_green) + _led_worst(led_options)


def min_start_voltage(spec: CapacitorSpec, e_req: float, delta: float = 0.0) -> float:
    """Minimum capacitor voltage at which ``e_req + delta`` is usable.

    Inverse of :func:`usable_energy` on [v_off, v_max]. Raises
    UnreachableRequirementError when the requirement exceeds what even a full
    capacitor can supply.
    """
    if e_req < 0 or delta < 0:
        raise DomainError("energy requirement and guard margin must be >= 0")
    v = math.sqrt(spec.v_off**2 + 2.0 * (e_req + delta) / spec.capacitance_farads)
    if v > spec.v_max * (1.0 + 1e-12):
        raise UnreachableRequirementError(
            f"requirement {e_req + delta} J needs {v:.4f} V, above v_max={spec.v_max} V; "
            "the pipeline can never be admitted"
        )
    return min(v, spec.v_max)
