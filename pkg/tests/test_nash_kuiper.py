"""
Nash-Kuiper ütemezések, iteráció és a teljes flexibilitási folyamat
"""
import math
from types import SimpleNamespace

import numpy as np
import pytest

import src.core.nash_kuiper as nash_kuiper
from src.core.errors import MarginError, PreconditionError, ScheduleError, TargetUnreachableError
from src.core.fields import Field, Grid2, identity_field
from src.core.nash_kuiper import (
    FlexReport,
    NkRunReport,
    NkSchedule,
    ScheduleCase,
    TerminationReason,
    build_schedule,
    check_invariants,
    check_requirements,
    full_flexibility,
    holder_witness,
    margin_plan,
    practical_schedule,
    run,
)


def _schedule(beta: float) -> NkSchedule:
    return build_schedule(S=1, J=1, beta=beta, deficit0=0.1, grad_v0=0.0, a_norm=1.0, alpha=0.1)


class TestExactSchedule:
    @pytest.mark.parametrize("beta, case", [(1.0, ScheduleCase.A), (0.5, ScheduleCase.B)])
    def test_cases_satisfy_requirements(self, beta, case):
        sched = _schedule(beta)
        assert sched.case is case
        assert sched.a > 1.0
        assert 0 < sched.gamma < 1
        assert check_invariants(sched) is None
        assert all(check_requirements(sched).values())

    def test_scales_halve_and_frequencies_follow(self):
        sched = _schedule(1.0)
        assert sched.iterations >= 2
        for i in range(sched.iterations - 1):
            assert sched.l[i + 1] <= 0.5 * sched.l[i] * (1 + 1e-9)
        for l_i, lam_i in zip(sched.l, sched.lam):
            assert lam_i == pytest.approx(sched.b / l_i ** sched.a, rel=1e-9)
            assert lam_i * l_i > 1

    def test_normalisation(self):
        sched = _schedule(1.0)
        assert (sched.l[0] * sched.M[0]) ** 2 == pytest.approx(0.1, rel=1e-9)

    def test_summary_echoes_logs(self):
        summary = _schedule(0.5).summary()
        assert summary["mode"] == "exact"
        assert summary["case"] == "B"
        assert len(summary["log_l"]) == len(summary["log_lambda"])
        assert all(math.isfinite(x) for x in summary["log_M"])

    @pytest.mark.parametrize("kwargs", [
        {"alpha": 0.4},
        {"deficit0": 1.5},
        {"beta": 1.2},
        {"C": 0.5},
    ])
    def test_invalid_inputs(self, kwargs):
        params = dict(S=1, J=1, beta=1.0, deficit0=0.1, grad_v0=0.0, a_norm=1.0, alpha=0.1)
        params.update(kwargs)
        with pytest.raises(ScheduleError):
            build_schedule(**params)


class TestPracticalSchedule:
    def test_geometric(self):
        sched = practical_schedule(l0=0.1, ratio=0.5, lambda_l=4.0, iterations=3)
        assert sched.l == pytest.approx([0.1, 0.05, 0.025])
        assert [lam * l for lam, l in zip(sched.lam, sched.l)] == pytest.approx([4.0] * 3)

    def test_frequency_growth_may_not_lag(self):
        with pytest.raises(ScheduleError):
            practical_schedule(l0=0.1, ratio=0.5, lambda_ratio=1.5)

    @pytest.mark.parametrize("kwargs", [{"l0": 0.0}, {"ratio": 1.0}, {"lambda_l": 1.0}, {"iterations": 0}])
    def test_invalid(self, kwargs):
        params = dict(l0=0.1)
        params.update(kwargs)
        with pytest.raises(ScheduleError):
            practical_schedule(**params)


class TestRun:
    def test_zero_deficit(self, conformal_target):
        v, w, _ = conformal_target
        A = Field.zeros(v.grid, (2, 2))
        with pytest.raises(PreconditionError):
            run(v, w, A, practical_schedule(l0=0.1))

    def test_deficit_above_one(self, conformal_target):
        v, w, _ = conformal_target
        with pytest.raises(PreconditionError):
            run(v, w, identity_field(v.grid, 2.0), practical_schedule(l0=0.1))

    def test_first_stage_must_fit_margin(self, unit_grid):
        v = Field.zeros(unit_grid, (2,))
        w = Field.zeros(unit_grid, (2,))
        A = identity_field(unit_grid, 0.2)
        with pytest.raises(MarginError):
            run(v, w, A, practical_schedule(l0=0.4, lambda_l=4.0))

    def test_stops_on_resolution(self, unit_grid):
        v = Field.zeros(unit_grid, (2,))
        w = Field.zeros(unit_grid, (2,))
        A = identity_field(unit_grid, 0.2)
        _, _, report = run(v, w, A, practical_schedule(l0=unit_grid.h, lambda_l=4.0))
        assert report.termination is TerminationReason.RESOLUTION

    @pytest.mark.slow
    def test_single_iteration(self, conformal_target):
        v, w, A = conformal_target
        schedule = practical_schedule(l0=0.1, lambda_l=4.0, iterations=1)
        v_out, w_out, report = run(v, w, A, schedule, alpha=(0.2, 0.5), r0=2.0)

        assert report.termination is TerminationReason.ITERATIONS
        assert report.completed == 1
        assert report.deficits[0] < report.initial_deficit
        assert report.is_monotone()
        assert set(report.holder_tracks) == {0.2, 0.5}
        assert report.cauchy_ratio == pytest.approx(report.cauchy_sum / report.cauchy_shape)

        rows = report.to_csv_rows()
        assert len(rows) == 1
        assert {"iteration", "l", "lambda", "M", "deficit", "holder_grad_v_0.2"} <= set(rows[0])
        summary = report.to_json_summary()
        assert summary["termination"] == "iterations"
        assert summary["schedule"]["mode"] == "practical"


def test_margin_plan():
    scales = [0.125, 0.0625, 0.03125]
    h = 1.0 / 1024
    assert margin_plan(scales, 0.3, h) == 3
    assert margin_plan(scales, 0.25, h) == 1
    assert margin_plan(scales, 0.2, h) == 0
    assert margin_plan([], 0.3, h) == 0


def _scripted_stage(monkeypatch, deficits):
    """A stage helyett előre megadott deficiteket ad; minden hívás 1-et ad v-hez"""
    calls = iter(deficits)

    def fake(v, w, A, params, k):
        return v + 1.0, w, SimpleNamespace(final_deficit=next(calls))

    monkeypatch.setattr(nash_kuiper, "run_stage", fake)


class TestMonotoneGuard:
    schedule = practical_schedule(l0=0.08, ratio=0.5, lambda_l=1.5, iterations=3)

    def test_decreasing_stages_are_kept(self, conformal_target, monkeypatch):
        _scripted_stage(monkeypatch, [0.2, 0.1, 0.05])
        v, w, A = conformal_target
        v_out, _, report = run(v, w, A, self.schedule, monotone=True)

        assert report.termination is TerminationReason.ITERATIONS
        assert report.completed == 3
        assert report.deficits == [0.2, 0.1, 0.05]
        assert report.is_monotone()
        assert report.rejected_deficit is None
        assert np.allclose(v_out.data, v.data + 3.0)

    def test_non_decreasing_stage_is_discarded(self, conformal_target, monkeypatch):
        _scripted_stage(monkeypatch, [0.2, 0.25, 0.1])
        v, w, A = conformal_target
        v_out, _, report = run(v, w, A, self.schedule, monotone=True)

        assert report.termination is TerminationReason.STALLED
        assert report.completed == 1
        assert report.deficits == [0.2]
        assert report.rejected_deficit == 0.25
        assert np.allclose(v_out.data, v.data + 1.0)
        assert report.to_json_summary()["termination"] == "stalled"

    def test_guard_off_keeps_increase(self, conformal_target, monkeypatch):
        _scripted_stage(monkeypatch, [0.2, 0.25, 0.1])
        v, w, A = conformal_target
        _, _, report = run(v, w, A, self.schedule, monotone=False)
        assert report.completed == 3
        assert not report.is_monotone()

    def test_margin_truncates_schedule(self, conformal_target, monkeypatch):
        _scripted_stage(monkeypatch, [0.2, 0.1, 0.05, 0.01])
        v, w, A = conformal_target
        schedule = practical_schedule(l0=0.1, ratio=0.5, lambda_l=4.0, iterations=2)
        _, _, report = run(v, w, A, schedule)
        assert report.termination is TerminationReason.MARGIN
        assert report.completed == 1


def _report(holder, initial):
    return NkRunReport(
        schedule={},
        initial_deficit=0.3,
        deficits=[0.2] * len(holder[0.2]),
        v_increments=[1.0] * len(holder[0.2]),
        holder_tracks=holder,
        holder_initial=initial,
    )


class TestHolderWitness:
    def test_growth_ratios(self):
        report = _report({0.2: [2.0, 3.0], 0.5: [8.0, 64.0]}, {0.2: 1.0, 0.5: 2.0})
        growth = report.holder_growth()
        assert growth[0.2] == pytest.approx([2.0, 1.5])
        assert growth[0.5] == pytest.approx([4.0, 8.0])
        rows = report.to_csv_rows()
        assert rows[1]["holder_growth_0.5"] == pytest.approx(8.0)

    def test_separated(self):
        report = _report({0.2: [2.0, 3.0], 0.5: [8.0, 64.0]}, {0.2: 1.0, 0.5: 2.0})
        witness = holder_witness(report, below=0.2, above=0.5)
        assert witness.observed
        assert witness.separated
        assert witness.to_json_summary()["growth_above"] == pytest.approx(8.0)

    def test_not_separated(self):
        report = _report({0.2: [3.0], 0.5: [3.0]}, {0.2: 1.0, 0.5: 1.0})
        witness = holder_witness(report, below=0.2, above=0.5)
        assert witness.observed
        assert witness.separated is False

    def test_growth_from_zero_is_not_observed(self):
        report = _report({0.2: [3.0], 0.5: [30.0]}, {0.2: 0.0, 0.5: 0.0})
        assert report.holder_growth()[0.2] == [math.inf]
        witness = holder_witness(report, below=0.2, above=0.5)
        assert not witness.observed
        assert witness.separated is None

    def test_no_iterations(self):
        report = _report({0.2: [], 0.5: []}, {0.2: 1.0, 0.5: 1.0})
        assert not holder_witness(report, below=0.2, above=0.5).observed

    def test_untracked_exponent(self):
        report = _report({0.2: [1.0]}, {0.2: 1.0})
        with pytest.raises(ValueError):
            holder_witness(report, below=0.2, above=0.5)


def test_flex_deficit_track():
    nk = NkRunReport(schedule={}, initial_deficit=0.01, deficits=[0.005, 0.002])
    report = FlexReport(epsilon=0.05, initial_deficit=0.28, first_step_deficit=0.01, nk=nk)
    assert report.deficit_track() == [0.28, 0.01, 0.005, 0.002]
    assert report.is_monotone()
    report.nk.deficits.append(0.003)
    assert not report.is_monotone()
    assert report.to_json_summary()["monotone"] is False


class TestFullFlexibility:
    def test_zero_deficit_short_circuits(self):
        grid = Grid2.build(0.0, 1.0, 0.0, 1.0, margin=0.05, nodes=128)
        v = Field.zeros(grid, (2,))
        w = Field.zeros(grid, (2,))
        A = Field.zeros(grid, (2, 2))
        v_out, w_out, report = full_flexibility(v, w, A, epsilon=0.1)
        assert report.short_circuit
        assert report.first_step is None
        assert report.nk is None
        assert report.final_deficit == 0.0
        assert report.v_displacement == 0.0
        assert report.to_json_summary()["short_circuit"] is True

    def test_alpha_above_threshold(self, unit_grid):
        v = Field.zeros(unit_grid, (2,))
        w = Field.zeros(unit_grid, (2,))
        with pytest.raises(ScheduleError):
            full_flexibility(v, w, identity_field(unit_grid, 0.2), epsilon=0.1, alpha=0.4)

    def test_indefinite_deficit(self, unit_grid):
        v = Field.zeros(unit_grid, (2,))
        w = Field.zeros(unit_grid, (2,))
        A = Field.constant(unit_grid, np.diag([0.2, -0.1]))
        with pytest.raises(PreconditionError):
            full_flexibility(v, w, A, epsilon=0.1)

    @pytest.mark.parametrize("epsilon", [0.0, 1.0])
    def test_epsilon_range(self, unit_grid, epsilon):
        v = Field.zeros(unit_grid, (2,))
        w = Field.zeros(unit_grid, (2,))
        with pytest.raises(ValueError):
            full_flexibility(v, w, identity_field(unit_grid, 0.2), epsilon=epsilon)

    @pytest.fixture
    def small_square(self):
        return Grid2.build(0.0, 0.2, 0.0, 0.2, margin=0.1, nodes=128)

    def test_first_step_carries_the_run(self, small_square):
        v = Field.zeros(small_square, (2,))
        w = Field.zeros(small_square, (2,))
        A = identity_field(small_square, 0.2)
        schedule = practical_schedule(l0=0.03, lambda_l=4.0, iterations=2)

        _, _, report = full_flexibility(v, w, A, epsilon=0.05, schedule=schedule)
        assert report.nk.termination is TerminationReason.NYQUIST
        assert report.final_deficit == report.first_step_deficit
        assert report.final_deficit <= 0.05
        assert report.v_displacement <= 0.05
        assert report.deficit_track() == [report.initial_deficit, report.first_step_deficit]
        assert report.to_json_summary()["monotone"] is True

    def test_shortfall_raises_with_best_fields(self, small_square):
        v = Field.zeros(small_square, (2,))
        w = Field.zeros(small_square, (2,))
        A = identity_field(small_square, 0.2)
        schedule = practical_schedule(l0=0.03, lambda_l=4.0, iterations=2)

        with pytest.raises(TargetUnreachableError) as info:
            full_flexibility(v, w, A, epsilon=0.05, schedule=schedule, target=1e-9)
        assert info.value.achieved > 1e-9
        v_best, w_best = info.value.best
        assert v_best.value_shape == (2,)
