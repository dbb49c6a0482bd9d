import math

import pytest

from zedsim.config import DeviceConfig
from zedsim.energy import CapacitorSpec, state_energy, usable_energy
from zedsim.errors import DomainError
from zedsim.pmu import HarvestProfile
from zedsim.policy import ExitTaken, InferenceInstance
from zedsim.scheduler import (
    ScheduleConfig,
    candidate_start_times,
    detect_power_failure,
    run_window,
    try_admit,
)
from zedsim.sim import _Engine

SPEC = CapacitorSpec(1.5, 3.6, 3.92, 4.5)


class TestCandidateStartTimes:
    def test_adaptive_grid(self):
        cfg = ScheduleConfig(10.0, 4.0, 20)
        times = candidate_start_times(0.0, cfg)
        assert len(times) == 20
        assert times == pytest.approx([0.2 * i for i in range(20)], abs=1e-12)

    def test_fixed_rule_single_point(self):
        cfg = ScheduleConfig(10.0, 4.0, 1)
        assert candidate_start_times(10.0, cfg) == [10.0]

    def test_degenerate_deadline(self):
        cfg = ScheduleConfig(10.0, 0.0, 1)
        assert candidate_start_times(0.0, cfg) == [0.0]


class TestTryAdmit:
    def test_ample(self):
        assert try_admit(5.4675, 81.407e-3, 0.0)

    def test_empty(self):
        assert not try_admit(0.0, 1e-9, 0.0)

    def test_boundary_inclusive(self):
        assert try_admit(81.407e-3, 81.407e-3, 0.0)

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            try_admit(-1.0, 0.0, 0.0)


class TestDetectPowerFailure:
    def test_below(self):
        assert detect_power_failure(3.59, SPEC)

    def test_boundary_strict(self):
        assert not detect_power_failure(3.6, SPEC)

    def test_ample(self):
        assert not detect_power_failure(4.5, SPEC)


def _engine(device, harvest, v0):
    return _Engine(device, harvest, v0)


class TestRunWindow:
    def test_happy_path_confident_instance(self):
        device = DeviceConfig.default()
        clock = _engine(device, HarvestProfile.constant(0.0), 4.5)
        inst = InferenceInstance(0, 0.9, 0.9, 1)
        out = run_window(0, clock, device, inst)
        assert out.started_at == 0.0
        assert not out.deferred and not out.power_failure
        assert out.decision.exit_taken is ExitTaken.EX1
        assert out.decision.prediction == 1
        expected = sum(
            device.stage_energy(n)
            for n in ("measurement", "capture_preprocess", "inference_ex1", "led_blue")
        )
        assert out.energy_spent == pytest.approx(expected, rel=1e-9)
        assert out.correct is True

    def test_all_candidates_fail_costs_n_measurements(self):
        # enabled at v_on but the usable reserve is below the requirement
        device = DeviceConfig.default().with_capacitance(0.05)
        clock = _engine(device, HarvestProfile.constant(0.0), 3.92)
        e_before = usable_energy(device.capacitor, clock.v_c)
        assert e_before < device.budget().e_req_ex1
        out = run_window(0, clock, device, InferenceInstance(0, 0.9, 0.9, 1))
        assert out.deferred and out.started_at is None and out.decision is None
        n = device.schedule.n_attempts
        meas = device.stage_energy("measurement")
        assert out.energy_spent == pytest.approx(n * meas, rel=1e-9)
        # deferral leaves the buffer untouched apart from those debits
        e_after = usable_energy(device.capacitor, clock.v_c)
        assert e_before - e_after == pytest.approx(n * meas, rel=1e-9)

    def test_disabled_outputs_skip_candidates_for_free(self):
        device = DeviceConfig.default()
        clock = _engine(device, HarvestProfile.constant(0.0), 3.7)  # below v_on: latched off
        out = run_window(0, clock, device, InferenceInstance(0, 0.9, 0.9, 1))
        assert out.deferred
        assert out.energy_spent == 0.0
        assert clock.v_c == 3.7

    def test_admission_at_late_candidate_under_rising_harvest(self):
        # harvest burst shortly before candidate 7 lifts the buffer over the
        # requirement; candidates 0..6 fail and each costs one measurement
        device = DeviceConfig.default().with_capacitance(0.1)
        device = device.__class__(
            capacitor=CapacitorSpec(0.1, 3.6, 3.65, 4.5),
            stages=device.stages,
            thresholds=device.thresholds,
            schedule=device.schedule,
        )
        e_req = device.budget().e_req_ex1
        v0 = math.sqrt(3.6**2 + 2 * (e_req - 0.02) / 0.1)  # 20 mJ short
        harvest = HarvestProfile.from_pairs([(0.0, 0.0), (1.35, 0.2)])
        clock = _engine(device, harvest, v0)
        inst = InferenceInstance(0, 0.9, 0.9, 1)
        out = run_window(0, clock, device, inst)

        expected_i = _first_admitted_candidate_oracle(device, harvest, v0)
        assert expected_i == 7
        assert out.started_at == candidate_start_times(0.0, device.schedule)[expected_i]
        assert out.started_at == pytest.approx(1.4, abs=1e-12)
        assert not out.deferred and out.decision is not None

    def test_single_pipeline_per_window(self):
        device = DeviceConfig.default()
        clock = _engine(device, HarvestProfile.constant(0.0), 4.5)
        run_window(0, clock, device, InferenceInstance(0, 0.5, 0.5, 1))
        captures = [e for e in clock.events if e[1] == "stage:capture_preprocess"]
        admits = [e for e in clock.events if e[1] == "admit"]
        assert len(captures) == 1 and len(admits) == 1


def _first_admitted_candidate_oracle(device, harvest, v0, substeps=4):
    """Independent coarse integrator replaying the admission protocol."""
    from zedsim.pmu import harvest_current_at

    cap = device.capacitor
    c = cap.capacitance_farads
    dt = device.timestep_seconds / substeps
    e = 0.5 * c * v0**2
    floor = 0.5 * c * cap.v_off**2
    t = 0.0
    meas = device.stage("measurement")
    p_meas = meas.supply_volts * meas.current_amps
    for i, s in enumerate(candidate_start_times(0.0, device.schedule)):
        while t < s - 1e-12:
            step = min(dt, s - t)
            e += harvest_current_at(harvest, t) * math.sqrt(2 * e / c) * step
            t += step
        # measurement debit spread over its duration
        end = t + meas.duration_seconds
        while t < end - 1e-12:
            step = min(dt, end - t)
            e += (harvest_current_at(harvest, t) * math.sqrt(2 * e / c) - p_meas) * step
            t += step
        if e - floor >= device.budget().e_req_ex1 + device.schedule.guard_delta:
            return i
    return None
