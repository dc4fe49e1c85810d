"""
Monge-Ampère ellenőrzés, rátaillesztés és a sweep
"""
import math

import numpy as np
import pytest

from src.core.experiment import (
    battery_constant,
    fit_rate,
    run_experiment,
    run_sweep,
    verify_ma,
    weak_battery,
    weak_ma_residuals,
)
from src.core.fields import Field, Grid2
from src.core.problems import build_problem
from src.core.stage import StageParams, exponents
from src.utils.config_manager import ConfigManager, ExperimentConfig


@pytest.fixture
def grid():
    return Grid2.build(0.0, 1.0, 0.0, 1.0, margin=0.05, nodes=257)


class TestBattery:
    def test_supported_inside_domain(self, grid):
        x1, x2 = grid.coordinates()
        outside = (x1 < grid.x_min) | (x1 > grid.x_max) | (x2 < grid.y_min) | (x2 > grid.y_max)
        battery = weak_battery(grid)
        assert len(battery) == 5
        for test in battery:
            assert np.all(test["psi"][outside] == 0.0)
            assert np.max(test["psi"]) > 0.5

    def test_constant_is_positive(self, grid):
        assert battery_constant(grid) > 0.0


class TestVerify:
    def test_saddle_is_exact(self, grid):
        problem = build_problem("hessian_saddle", grid, 2)
        vk, weak = verify_ma(problem.v, problem.w, problem.A, problem.f)
        assert vk < 1e-10
        assert weak < 1e-3

    def test_wrong_density_is_detected(self, grid):
        problem = build_problem("hessian_saddle", grid, 2)
        wrong = Field.constant(grid, 1.0)
        assert max(weak_ma_residuals(problem.v, wrong)) > 1e-3

    def test_default_density_from_target(self, grid):
        problem = build_problem("quadratic_bending", grid, 2, c=1.0, shift=0.1)
        vk, weak = verify_ma(problem.v, problem.w, problem.A)
        assert vk == pytest.approx(0.1 * math.sqrt(2.0), rel=1e-6)
        assert weak >= 0.0


class TestFitRate:
    def test_exact_power_law(self):
        x = np.array([1.0, 2.0, 4.0, 8.0])
        fit = fit_rate(x, 3.0 * x ** -1.5)
        assert fit.slope == pytest.approx(-1.5)
        assert fit.intercept == pytest.approx(math.log(3.0))
        assert fit.r_value == pytest.approx(-1.0)
        assert fit.ci_low <= fit.slope <= fit.ci_high
        assert fit.within(-1.5, 1e-9)
        assert fit.n == 4

    def test_two_points_have_no_interval(self):
        fit = fit_rate([1.0, 2.0], [1.0, 4.0])
        assert fit.slope == pytest.approx(2.0)
        assert math.isnan(fit.ci_low)

    @pytest.mark.parametrize("x, y", [([1.0], [1.0]), ([1.0, 2.0], [1.0, -1.0]), ([1.0, 2.0], [1.0])])
    def test_invalid(self, x, y):
        with pytest.raises(ValueError):
            fit_rate(x, y)


@pytest.mark.slow
def test_sweep_keeps_input_order(stage_grid, tmp_path):
    problem = build_problem("constant_conformal", stage_grid, 2, c=0.2)
    lambdas = [60.0, 40.0]
    params = [StageParams(l=0.1, lam=lam, r0=2.0) for lam in lambdas]

    reports = run_sweep(problem, params, 2, threads=2, job_dir=tmp_path)
    assert [r.lam for r in reports] == lambdas
    assert (tmp_path / "stage_000.csv").exists()
    assert (tmp_path / "stage_001.txt").exists()


def _preset(name, tmp_path):
    config = ConfigManager.from_preset(name)
    config.set('output.dir', str(tmp_path))
    return ExperimentConfig.from_manager(config)


def _small_flex_config(out):
    config = ConfigManager()
    for key, value in {
        'domain.x_max': 0.2,
        'domain.y_max': 0.2,
        'grid.nodes': 128,
        'grid.margin': 0.1,
        'problem.params': {'c': 0.2},
        'nk.l0': 0.03,
        'nk.iterations': 2,
        'output.dir': str(out),
        'output.formats': ['csv', 'json'],
    }.items():
        config.set(key, value)
    return ExperimentConfig.from_manager(config)


def test_flex_runs_are_byte_reproducible(tmp_path):
    first = run_experiment(_small_flex_config(tmp_path / "a"), "flex")
    second = run_experiment(_small_flex_config(tmp_path / "b"), "flex")
    assert first.summary["holder_witness"]["observed"] is False
    for name in ("summary.json", "fields.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert second.summary["final_deficit"] == first.summary["final_deficit"]


@pytest.mark.slow
class TestPresets:
    def test_stage_sweep_rates(self, tmp_path):
        cfg = _preset("stage-sweep-k2", tmp_path)
        result = run_experiment(cfg, "sweep", tmp_path)
        table = exponents(cfg.k)
        assert result.summary["points"] == 4
        assert abs(result.summary["deficit_rate"]["slope"] + table.S) <= cfg.rate_tolerance
        assert abs(result.summary["hessian_rate"]["slope"] - table.J) <= cfg.rate_tolerance
        assert result.summary["final_deficit"] < result.summary["input_deficit"]

    def test_flex_k2(self, tmp_path):
        cfg = _preset("flex-k2", tmp_path)
        result = run_experiment(cfg, "flex", tmp_path)
        summary = result.summary
        assert summary["final_deficit"] <= 1e-2 * summary["initial_deficit"]
        assert summary["v_displacement"] <= 0.05
        assert summary["w_displacement"] <= 0.05
        assert summary["monotone"] is True
        assert (tmp_path / "fields.grid" / "deficit.txt").exists()

    def test_ma_density_k1(self, tmp_path):
        cfg = _preset("ma-density-k1", tmp_path)
        result = run_experiment(cfg, "flex", tmp_path)
        verification = result.summary["verification"]
        assert result.summary["final_deficit"] <= 0.1
        assert verification["weak_ma_residual"] <= 3.0 * verification["vk_residual"] + 1e-4
