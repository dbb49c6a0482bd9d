import math

import pytest

from zedsim.errors import DomainError, FitError, TraceError
from zedsim.pmu import HarvestProfile
from zedsim.policy import InferenceInstance
from zedsim.traces import (
    GeneratorSpec,
    generate_trace,
    load_harvest,
    load_trace,
    save_harvest,
    save_trace,
    trace_statistics,
)


class TestTraceFiles:
    def test_row_parsing(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("id,o1,o2,label\n0,0.95,0.99,1\n")
        (inst,) = load_trace(path)
        assert inst == InferenceInstance(0, 0.95, 0.99, 1)

    def test_out_of_range_score(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("id,o1,o2,label\n3,1.2,0.5,1\n")
        with pytest.raises(TraceError, match=":2:"):
            load_trace(path)

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("id,o1,o2,label\n0,0.5,0.5,1\nx,0.5,0.5,1\n")
        with pytest.raises(TraceError, match=":3:"):
            load_trace(path)

    def test_empty_file_warns(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("")
        with pytest.warns(UserWarning):
            assert load_trace(path) == []

    def test_ids_must_ascend(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("id,o1,o2,label\n1,0.5,0.5,1\n1,0.5,0.5,0\n")
        with pytest.raises(TraceError, match="ascending"):
            load_trace(path)

    def test_round_trip(self, tmp_path):
        trace = generate_trace(GeneratorSpec(50, 0.75, 0.85, 0.5, 3))
        path = tmp_path / "t.csv"
        save_trace(trace, path)
        assert load_trace(path) == trace

    def test_harvest_round_trip_with_ma_units(self, tmp_path):
        profile = HarvestProfile.from_pairs([(0.0, 1e-3), (200.0, 5e-3)])
        path = tmp_path / "h.csv"
        save_harvest(profile, path)
        assert load_harvest(path) == profile

    def test_harvest_bad_header(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("time,current\n0,1\n")
        with pytest.raises(TraceError):
            load_harvest(path)


class TestGenerator:
    def test_calibration_hits_targets(self):
        spec = GeneratorSpec(5000, 0.7265, 0.8309, 0.5386, 7)
        stats = trace_statistics(generate_trace(spec))
        assert abs(stats.acc_at_half_ex1 - 0.7265) <= 0.01
        assert abs(stats.acc_at_half_ex2 - 0.8309) <= 0.01
        assert abs(stats.person_fraction - 0.5386) <= 0.02

    def test_calibration_tight_across_seeds(self):
        for seed in range(5):
            spec = GeneratorSpec(5000, 0.7265, 0.8309, 0.5386, seed)
            stats = trace_statistics(generate_trace(spec))
            assert abs(stats.acc_at_half_ex1 - 0.7265) <= 0.01
            assert abs(stats.acc_at_half_ex2 - 0.8309) <= 0.01

    def test_perfect_classifier_limit(self):
        trace = generate_trace(GeneratorSpec(500, 1.0, 1.0, 0.5, 1))
        for inst in trace:
            assert (inst.o1 >= 0.5) == bool(inst.label)
            assert (inst.o2 >= 0.5) == bool(inst.label)

    def test_seeded_determinism(self):
        spec = GeneratorSpec(1000, 0.75, 0.85, 0.5386, 12)
        assert generate_trace(spec) == generate_trace(spec)
        other = GeneratorSpec(1000, 0.75, 0.85, 0.5386, 13)
        assert generate_trace(other) != generate_trace(spec)

    def test_label_balance_exact_count(self):
        trace = generate_trace(GeneratorSpec(1000, 0.75, 0.85, 0.5386, 4))
        assert sum(i.label for i in trace) == round(1000 * 0.5386)

    def test_deep_head_dominates_shallow(self):
        trace = generate_trace(GeneratorSpec(5000, 0.7265, 0.8309, 0.5386, 7))
        stats = trace_statistics(trace)
        assert stats.acc_at_half_ex2 >= stats.acc_at_half_ex1
        ok2_given_ok1 = [
            (i.o2 >= 0.5) == bool(i.label)
            for i in trace
            if (i.o1 >= 0.5) == bool(i.label)
        ]
        ok2_given_bad1 = [
            (i.o2 >= 0.5) == bool(i.label)
            for i in trace
            if (i.o1 >= 0.5) != bool(i.label)
        ]
        assert sum(ok2_given_ok1) / len(ok2_given_ok1) >= sum(ok2_given_bad1) / len(
            ok2_given_bad1
        )

    def test_scores_in_unit_interval(self):
        for inst in generate_trace(GeneratorSpec(2000, 0.6, 0.9, 0.3, 2)):
            assert 0.0 <= inst.o1 <= 1.0 and 0.0 <= inst.o2 <= 1.0

    def test_infeasible_targets(self):
        with pytest.raises(FitError):
            GeneratorSpec(100, 0.4, 0.8, 0.5, 1)  # acc1 below 0.5
        with pytest.raises(FitError):
            GeneratorSpec(100, 0.9, 0.8, 0.5, 1)  # acc1 > acc2
        with pytest.raises(FitError):
            GeneratorSpec(100, 0.7, 0.8, 0.0, 1)  # degenerate class balance
        with pytest.raises(FitError):
            GeneratorSpec(0, 0.7, 0.8, 0.5, 1)


class TestStatistics:
    def test_single_instance(self):
        stats = trace_statistics([InferenceInstance(0, 0.9, 0.9, 1)])
        assert stats.n == 1
        assert stats.acc_at_half_ex1 in (0.0, 1.0)
        assert stats.acc_at_half_ex2 in (0.0, 1.0)

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            trace_statistics([])
