"""Hysteretic supply-state machine and capacitor charge/discharge stepping.

The supply classifies the capacitor voltage into four modes. Between the
cutoff ``v_off`` and the turn-on ``v_on`` the mode is hysteretic: whether the
outputs are powered depends on which threshold was crossed last. Once the
voltage touches ``v_off`` the outputs latch off and only a recovery through
``v_on`` re-enables them; until then all harvested energy goes into the
capacitor.

Harvesting is modelled as a current source into the capacitor at its terminal
voltage (charging power = i_h * v_c), so with no load the voltage rises
linearly at i_h / C volts per second. There is no self-discharge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple

from .energy import CapacitorSpec
from .errors import DomainError, SimulationFault

_V_MAX_REL_TOL = 1e-12


class PmuMode(Enum):
    COLD_START = "cold_start"
    HYSTERESIS_OFF = "hysteresis_off"
    HYSTERESIS_ON = "hysteresis_on"
    OPERATE = "operate"
    FULL = "full"

    @property
    def outputs_enabled(self) -> bool:
        return self in (PmuMode.HYSTERESIS_ON, PmuMode.OPERATE, PmuMode.FULL)


def mode_of(v_c: float, spec: CapacitorSpec, outputs_latched_on: bool) -> PmuMode:
    """Classify the voltage into a supply mode.

    ``outputs_latched_on`` is the hysteresis history flag: True if the
    voltage reached v_on more recently than it fell to v_off. It only
    matters inside the hysteretic band.
    """
    if v_c < 0 or v_c > spec.v_max * (1.0 + _V_MAX_REL_TOL):
        raise DomainError(f"voltage {v_c} outside [0, {spec.v_max}]")
    if v_c >= spec.v_max * (1.0 - _V_MAX_REL_TOL):
        return PmuMode.FULL
    if v_c >= spec.v_on:
        return PmuMode.OPERATE
    if v_c <= spec.v_off:
        return PmuMode.COLD_START
    return PmuMode.HYSTERESIS_ON if outputs_latched_on else PmuMode.HYSTERESIS_OFF


@dataclass(frozen=True)
class HarvestProfile:
    """Piecewise-constant harvested current: (start time, amps) segments."""

    times: Tuple[float, ...]
    currents: Tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.times) != len(self.currents) or not self.times:
            raise DomainError("profile needs matching, non-empty time and current lists")
        if self.times[0] != 0.0:
            raise DomainError("first segment must start at t=0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise DomainError("segment start times must be strictly increasing")
        if any(i < 0 for i in self.currents):
            raise DomainError("harvested currents must be >= 0")

    @classmethod
    def from_pairs(cls, segments: Sequence[Tuple[float, float]]) -> "HarvestProfile":
        return cls(tuple(t for t, _ in segments), tuple(i for _, i in segments))

    @classmethod
    def constant(cls, current_amps: float) -> "HarvestProfile":
        return cls((0.0,), (current_amps,))


def harvest_current_at(profile: HarvestProfile, t: float) -> float:
    """Current of the last segment whose start time is <= t."""
    if t < profile.times[0]:
        raise DomainError(f"t={t} is before the first segment")
    k = 0
    for j, start in enumerate(profile.times):
        if start <= t:
            k = j
        else:
            break
    return profile.currents[k]


@dataclass(frozen=True)
class EnergyState:
    """Capacitor voltage and supply mode at one instant."""

    v_c: float
    mode: PmuMode
    time: float = 0.0

    @property
    def outputs_enabled(self) -> bool:
        return self.mode.outputs_enabled


def initial_state(v_c: float, spec: CapacitorSpec, time: float = 0.0) -> EnergyState:
    """State for a device that just booted: outputs enabled only above v_on."""
    return EnergyState(v_c, mode_of(v_c, spec, outputs_latched_on=v_c >= spec.v_on), time)


def step(
    state: EnergyState,
    spec: CapacitorSpec,
    i_h: float,
    load_power_watts: float,
    dt: float,
    efficiency: float = 1.0,
) -> EnergyState:
    """Advance the buffer by one explicit-Euler step of length ``dt``.

    New energy = clamp(E + (i_h*v_c - load/efficiency)*dt, [0, E_max]).
    Raises SimulationFault if a load is requested while the outputs are
    disabled (the physical system would brown out the load instantly).
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    if load_power_watts < 0:
        raise DomainError("load power must be >= 0")
    if load_power_watts > 0 and not state.outputs_enabled:
        raise SimulationFault(
            f"load of {load_power_watts} W requested at t={state.time} with outputs disabled"
        )
    c = spec.capacitance_farads
    de = (i_h * state.v_c - load_power_watts / efficiency) * dt
    if de != 0.0:  # keep v bit-exact across zero-flow steps
        e = 0.5 * c * state.v_c**2 + de
        e_max = spec.energy_max
        if e > e_max:
            e = e_max
        elif e < 0.0:
            e = 0.0
        v = math.sqrt(2.0 * e / c)
    else:
        v = state.v_c
    enabled = state.outputs_enabled
    if v >= spec.v_on:
        enabled = True
    elif v <= spec.v_off:
        enabled = False
    return EnergyState(v, mode_of(v, spec, enabled), state.time + dt)
