"""Time-stepped simulation engine tying supply, scheduler and policy together.

A run is strictly sequential and deterministic: given the same configuration,
harvest profile and trace it reproduces bit-identical trajectories, window
outcomes and totals. Energy bookkeeping is closed: initial buffer energy plus
harvested energy equals final buffer energy plus load debits plus the energy
discarded when the capacitor is pinned at its ceiling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .config import DeviceConfig, config_hash
from .energy import state_energy
from .errors import ConfigError, DomainError, SimulationFault
from .pmu import HarvestProfile, PmuMode, mode_of
from .policy import ExitTaken, InferenceInstance
from .scheduler import (
    GATING_MOSFET,
    GATINGS,
    VARIANT_BASELINE,
    VARIANT_PROPOSED,
    VARIANTS,
    WindowOutcome,
    run_window,
)

_T_EPS = 1e-12
SAMPLE_INTERVAL = 0.01  # trajectory decimation, independent of the physics step


@dataclass(frozen=True)
class SimConfig:
    device: DeviceConfig
    initial_v: float
    horizon_seconds: float
    seed: int = 0
    policy_variant: str = VARIANT_PROPOSED
    gating_variant: str = GATING_MOSFET

    def __post_init__(self) -> None:
        cap = self.device.capacitor
        if not cap.v_off <= self.initial_v <= cap.v_max:
            raise ConfigError(
                f"initial_v={self.initial_v} outside [v_off={cap.v_off}, v_max={cap.v_max}]"
            )
        if self.horizon_seconds <= 0:
            raise ConfigError("horizon must be positive")
        if self.policy_variant not in VARIANTS:
            raise ConfigError(f"unknown policy variant {self.policy_variant!r}")
        if self.gating_variant not in GATINGS:
            raise ConfigError(f"unknown gating variant {self.gating_variant!r}")

    def to_dict(self) -> dict:
        return {
            "device": self.device.to_dict(),
            "initial_v": self.initial_v,
            "horizon_seconds": self.horizon_seconds,
            "seed": self.seed,
            "policy_variant": self.policy_variant,
            "gating_variant": self.gating_variant,
        }


@dataclass
class SimTotals:
    energy_consumed_j: float
    harvested_j: float
    clamp_loss_j: float
    floor_gain_j: float
    initial_energy_j: float
    final_energy_j: float
    n_windows: int
    completed_pipelines: int
    deferred_windows: int
    power_failures: int
    n_ex1: int
    n_ex2: int
    n_fallback: int
    accuracy_total: Optional[float]


@dataclass
class SimResult:
    config: dict
    trajectory: List[Tuple[float, float, str]]  # (time, v_c, mode)
    events: List[Tuple[float, str]]
    windows: List[WindowOutcome]
    totals: SimTotals

    @property
    def config_sha256(self) -> str:
        return config_hash(self.config)


class _Engine:
    """Capacitor integrator and stage runner; the scheduler's clock."""

    def __init__(self, device: DeviceConfig, harvest: HarvestProfile, initial_v: float):
        cap = device.capacitor
        self._device = device
        self._c = cap.capacitance_farads
        self._v_off = cap.v_off
        self._v_on = cap.v_on
        self._e_max = cap.energy_max
        self._e_floor = cap.energy_floor
        self._dt = device.timestep_seconds
        self._eta = device.converter_efficiency
        self._idle_draw = 0.0
        if device.idle_current_amps > 0:
            rail = device.stage("measurement").supply_volts
            self._idle_draw = rail * device.idle_current_amps / self._eta

        self._t = 0.0
        self._v = initial_v
        self._e = 0.5 * self._c * initial_v**2
        self._enabled = initial_v >= self._v_on

        self._seg_times = list(harvest.times)
        self._seg_currents = list(harvest.currents)
        self._seg_k = 0

        self.harvested = 0.0
        self.consumed = 0.0
        self.clamp_loss = 0.0
        self.floor_gain = 0.0

        self.samples: List[Tuple[float, float, bool]] = [(0.0, self._v, self._enabled)]
        self._next_sample = SAMPLE_INTERVAL
        self.events: List[Tuple[float, str]] = []

    @property
    def time(self) -> float:
        return self._t

    @property
    def v_c(self) -> float:
        return self._v

    @property
    def outputs_enabled(self) -> bool:
        return self._enabled

    @property
    def load_energy_spent(self) -> float:
        return self.consumed

    def usable_energy(self) -> float:
        return max(0.0, self._e - self._e_floor)

    def log_event(self, label: str) -> None:
        self.events.append((self._t, label))

    def advance_to(self, t_target: float) -> None:
        if t_target > self._t + _T_EPS:
            self._advance(t_target - self._t, 0.0, execution=False, idle=True)

    def run_stage(self, name: str) -> bool:
        """Run one pipeline stage; False if the voltage fell below cutoff."""
        prof = self._device.stage(name)
        p_load = prof.supply_volts * prof.current_amps
        if p_load > 0 and not self._enabled:
            raise SimulationFault(f"stage {name!r} requested at t={self._t} with outputs disabled")
        self.log_event("stage:" + name)
        return not self._advance(prof.duration_seconds, p_load, execution=True, idle=False)

    def _advance(self, duration: float, p_load: float, execution: bool, idle: bool) -> bool:
        if duration <= _T_EPS:
            return False
        t = self._t
        end = t + duration
        e = self._e
        v = self._v
        enabled = self._enabled
        c = self._c
        dt = self._dt
        e_max = self._e_max
        v_off = self._v_off
        v_on = self._v_on
        draw = p_load / self._eta
        idle_draw = self._idle_draw
        times = self._seg_times
        currs = self._seg_currents
        nseg = len(times)
        k = self._seg_k
        harvested = self.harvested
        consumed = self.consumed
        clamp_loss = self.clamp_loss
        floor_gain = self.floor_gain
        samples = self.samples
        next_s = self._next_sample
        sqrt = math.sqrt
        failed = False

        while end - t > _T_EPS:
            while k + 1 < nseg and times[k + 1] <= t + _T_EPS:
                k += 1
            step = end - t
            if dt < step:
                step = dt
            if k + 1 < nseg:
                gap = times[k + 1] - t
                if gap < step:
                    step = gap
            d = (idle_draw if enabled else 0.0) if idle else draw
            h_in = currs[k] * v * step
            out = d * step
            harvested += h_in
            consumed += out
            de = h_in - out
            if de != 0.0:  # keep v bit-exact across zero-flow spans
                e += de
                if e > e_max:
                    clamp_loss += e - e_max
                    e = e_max
                elif e < 0.0:
                    floor_gain += -e
                    e = 0.0
                v = sqrt(2.0 * e / c)
            t += step
            if v >= v_on:
                enabled = True
            elif v <= v_off:
                enabled = False
            if t >= next_s - _T_EPS:
                samples.append((t, v, enabled))
                while next_s <= t + _T_EPS:
                    next_s += SAMPLE_INTERVAL
            if execution and v < v_off:
                failed = True
                break

        self._t = t
        self._e = e
        self._v = v
        self._enabled = enabled
        self._seg_k = k
        self.harvested = harvested
        self.consumed = consumed
        self.clamp_loss = clamp_loss
        self.floor_gain = floor_gain
        self._next_sample = next_s
        return failed

    def snapshot_sample(self) -> None:
        self.samples.append((self._t, self._v, self._enabled))


def simulate(
    cfg: SimConfig, harvest: HarvestProfile, trace: Sequence[InferenceInstance]
) -> SimResult:
    """Run one end-to-end experiment; deterministic in all inputs."""
    device = cfg.device
    device.validate()
    sched = device.schedule
    n_windows = int(cfg.horizon_seconds // sched.window_seconds)
    if len(trace) < n_windows:
        raise ConfigError(
            f"trace has {len(trace)} instances but the horizon holds {n_windows} windows"
        )

    engine = _Engine(device, harvest, cfg.initial_v)
    initial_energy = 0.5 * device.capacitor.capacitance_farads * cfg.initial_v**2

    windows: List[WindowOutcome] = []
    next_instance = 0
    for k in range(n_windows):
        engine.advance_to(k * sched.window_seconds)
        outcome = run_window(
            k, engine, device, trace[next_instance], cfg.policy_variant, cfg.gating_variant
        )
        if outcome.started_at is not None:
            next_instance += 1
        windows.append(outcome)
        engine.advance_to((k + 1) * sched.window_seconds)
    engine.advance_to(cfg.horizon_seconds)
    engine.snapshot_sample()

    totals = _aggregate(windows, engine, initial_energy, n_windows)
    spec = device.capacitor
    trajectory = [
        (t, v, mode_of(v, spec, enabled).value) for t, v, enabled in engine.samples
    ]
    return SimResult(cfg.to_dict(), trajectory, engine.events, windows, totals)


def _aggregate(windows, engine, initial_energy, n_windows) -> SimTotals:
    completed = [w for w in windows if w.started_at is not None and not w.power_failure]
    exits = {ExitTaken.EX1: 0, ExitTaken.EX2: 0, ExitTaken.EX1_FALLBACK: 0}
    n_correct = 0
    for w in completed:
        exits[w.decision.exit_taken] += 1
        n_correct += bool(w.correct)
    return SimTotals(
        energy_consumed_j=engine.consumed,
        harvested_j=engine.harvested,
        clamp_loss_j=engine.clamp_loss,
        floor_gain_j=engine.floor_gain,
        initial_energy_j=initial_energy,
        final_energy_j=engine._e,
        n_windows=n_windows,
        completed_pipelines=len(completed),
        deferred_windows=sum(w.deferred for w in windows),
        power_failures=sum(w.power_failure for w in windows),
        n_ex1=exits[ExitTaken.EX1],
        n_ex2=exits[ExitTaken.EX2],
        n_fallback=exits[ExitTaken.EX1_FALLBACK],
        accuracy_total=n_correct / len(completed) if completed else None,
    )


def energy_ledger_residual(result: SimResult) -> float:
    """Closure error of the energy ledger; ~0 for a sound run."""
    t = result.totals
    return (
        t.initial_energy_j
        + t.harvested_j
        + t.floor_gain_j
        - t.final_energy_j
        - t.energy_consumed_j
        - t.clamp_loss_j
    )


@dataclass
class ReplayReport:
    """Outcome of re-running a result's inputs; truthy when they agree."""

    exact: bool
    tolerant: bool = False
    detail: str = ""

    def __bool__(self) -> bool:
        return self.exact or self.tolerant


def replay_check(
    result: SimResult,
    cfg: SimConfig,
    harvest: HarvestProfile,
    trace: Sequence[InferenceInstance],
) -> ReplayReport:
    """Re-simulate and compare against a previous result.

    With an identical timestep the comparison is bit-for-bit over trajectory,
    windows and totals. With a different timestep the run cannot match
    sample-for-sample, so totals are compared at 0.1% relative instead and a
    match is reported as tolerant.
    """
    fresh = simulate(cfg, harvest, trace)
    original_dt = result.config["device"]["timestep_seconds"]
    if cfg.device.timestep_seconds != original_dt:
        detail = _compare_tolerant(result.totals, fresh.totals)
        if detail is None:
            return ReplayReport(exact=False, tolerant=True, detail="tolerant match (timestep differs)")
        return ReplayReport(exact=False, tolerant=False, detail=detail)
    detail = _compare_exact(result, fresh)
    if detail is None:
        return ReplayReport(exact=True)
    return ReplayReport(exact=False, tolerant=False, detail=detail)


def _compare_exact(a: SimResult, b: SimResult) -> Optional[str]:
    if a.totals != b.totals:
        return f"totals differ: {a.totals} != {b.totals}"
    if a.windows != b.windows:
        for wa, wb in zip(a.windows, b.windows):
            if wa != wb:
                return f"window {wa.window_index} differs: {wa} != {wb}"
        return "window counts differ"
    if a.trajectory != b.trajectory:
        if len(a.trajectory) != len(b.trajectory):
            return f"trajectory lengths differ: {len(a.trajectory)} != {len(b.trajectory)}"
        for pa, pb in zip(a.trajectory, b.trajectory):
            if pa != pb:
                return f"trajectory point differs: {pa} != {pb}"
    if a.events != b.events:
        return "event logs differ"
    return None


def _compare_tolerant(a: SimTotals, b: SimTotals) -> Optional[str]:
    counts = (
        "n_windows", "completed_pipelines", "deferred_windows",
        "power_failures", "n_ex1", "n_ex2", "n_fallback",
    )
    for name in counts:
        if getattr(a, name) != getattr(b, name):
            return f"{name} differs: {getattr(a, name)} != {getattr(b, name)}"
    for name in ("energy_consumed_j", "harvested_j", "final_energy_j"):
        va, vb = getattr(a, name), getattr(b, name)
        scale = max(abs(va), abs(vb), 1e-12)
        if abs(va - vb) / scale > 1e-3:
            return f"{name} differs beyond 0.1%: {va} vs {vb}"
    return None


@dataclass
class PolicyComparison:
    results: Dict[str, SimResult]
    rows: List[dict]


def compare_policies(
    cfg_base: SimConfig,
    variants: Sequence[str],
    harvest: HarvestProfile,
    trace: Sequence[InferenceInstance],
) -> PolicyComparison:
    """Run several policy variants over identical inputs and tabulate deltas.

    The first variant is the reference: energy deltas are percentages of its
    total, accuracy and pipeline-count deltas are plain differences.
    """
    if not variants:
        raise DomainError("need at least one variant")
    results: Dict[str, SimResult] = {}
    for variant in variants:
        results[variant] = simulate(replace(cfg_base, policy_variant=variant), harvest, trace)
    base = results[variants[0]].totals
    rows = []
    for variant in variants:
        t = results[variant].totals
        energy_delta = None
        if base.energy_consumed_j > 0:
            energy_delta = 100.0 * (t.energy_consumed_j - base.energy_consumed_j) / base.energy_consumed_j
        acc_delta = None
        if t.accuracy_total is not None and base.accuracy_total is not None:
            acc_delta = t.accuracy_total - base.accuracy_total
        rows.append(
            {
                "variant": variant,
                "energy_consumed_j": t.energy_consumed_j,
                "accuracy_total": t.accuracy_total,
                "completed_pipelines": t.completed_pipelines,
                "power_failures": t.power_failures,
                "n_ex1": t.n_ex1,
                "n_ex2": t.n_ex2,
                "n_fallback": t.n_fallback,
                "energy_delta_pct": energy_delta,
                "accuracy_delta": acc_delta,
                "completed_delta": t.completed_pipelines - base.completed_pipelines,
            }
        )
    return PolicyComparison(results, rows)


TRAJECTORY_HEADER = ["time_s", "v_c", "mode", "event"]


def write_trajectory_csv(result: SimResult, path) -> None:
    """Samples and events merged chronologically; samples carry no event label."""
    rows = [(t, v, mode, "") for t, v, mode in result.trajectory]
    spec_rows = [(t, None, None, label) for t, label in result.events]
    merged = sorted(rows + spec_rows, key=lambda r: (r[0], r[3] != ""))
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_sha256={result.config_sha256}\n")
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER)
        for t, v, mode, label in merged:
            writer.writerow([repr(t), "" if v is None else repr(v), mode or "", label])


def totals_text(result: SimResult) -> str:
    """Single structured-text summary record of one run."""
    t = result.totals
    lines = [f"config_sha256={result.config_sha256}"]
    for name in (
        "energy_consumed_j", "harvested_j", "clamp_loss_j", "floor_gain_j",
        "initial_energy_j", "final_energy_j",
    ):
        lines.append(f"{name}={getattr(t, name)!r}")
    for name in (
        "n_windows", "completed_pipelines", "deferred_windows", "power_failures",
        "n_ex1", "n_ex2", "n_fallback",
    ):
        lines.append(f"{name}={getattr(t, name)}")
    acc = t.accuracy_total
    lines.append(f"accuracy_total={'' if acc is None else repr(acc)}")
    lines.append(f"ledger_residual_j={energy_ledger_residual(result)!r}")
    return "\n".join(lines) + "\n"


COMPARISON_HEADER = [
    "variant", "energy_consumed_j", "accuracy_total", "completed_pipelines",
    "power_failures", "n_ex1", "n_ex2", "n_fallback",
    "energy_delta_pct", "accuracy_delta", "completed_delta",
]


def write_comparison_csv(rows: Sequence[dict], path, config_hash_hex: Optional[str] = None) -> None:
    with open(path, "w", newline="") as fh:
        if config_hash_hex:
            fh.write(f"# config_sha256={config_hash_hex}\n")
        writer = csv.writer(fh)
        writer.writerow(COMPARISON_HEADER)
        for row in rows:
            writer.writerow(
                ["" if row[k] is None else (repr(row[k]) if isinstance(row[k], float) else row[k])
                 for k in COMPARISON_HEADER]
            )
