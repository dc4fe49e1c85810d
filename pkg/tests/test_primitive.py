"""
Primitív felbontás és az első korrekciós lépés
"""
import numpy as np
import pytest

from src.core.errors import PreconditionError, TargetUnreachableError
from src.core.fields import Field, Grid2, deficit, identity_field, sup_norm
from src.core.primitive import _ladder, first_step, primitive_coeffs


def _constant(grid, d11, d12, d22):
    return Field.constant(grid, np.array([[d11, d12], [d12, d22]]))


@pytest.fixture
def grid():
    return Grid2.build(0.0, 1.0, 0.0, 1.0, margin=0.1, nodes=384)


class TestPrimitiveCoeffs:
    def test_positive_off_diagonal(self, unit_grid):
        decomp = primitive_coeffs(_constant(unit_grid, 1.0, 0.2, 0.8))
        assert np.allclose(decomp.c1sq.data, 0.8)
        assert np.allclose(decomp.c2sq.data, 0.6)
        assert np.allclose(decomp.c3sq.data, 0.4)
        assert np.allclose(decomp.c3sq_reflected.data, 0.0)
        assert np.allclose(decomp.reconstruct().data, [[1.0, 0.2], [0.2, 0.8]])

    def test_negative_off_diagonal_uses_reflected_direction(self, unit_grid):
        decomp = primitive_coeffs(_constant(unit_grid, 1.0, -0.2, 0.8))
        assert np.allclose(decomp.c3sq.data, 0.0)
        assert np.allclose(decomp.c3sq_reflected.data, 0.4)
        assert np.allclose(decomp.reconstruct().data, [[1.0, -0.2], [-0.2, 0.8]])

    def test_smoothed_split_reconstructs(self, unit_grid):
        D = Field.from_function(
            unit_grid,
            lambda x1, x2: np.stack([
                np.stack([1.0 + 0 * x1, 0.1 * np.sin(6 * x1)], -1),
                np.stack([0.1 * np.sin(6 * x1), 1.0 + 0 * x1], -1),
            ], -2)
        )
        decomp = primitive_coeffs(D, smoothing=0.01)
        assert np.allclose(decomp.reconstruct().data, D.data, atol=1e-12)
        for coeff in decomp.coefficients():
            assert np.min(coeff.data) >= 0.0

    def test_far_from_conformal(self, unit_grid):
        with pytest.raises(PreconditionError):
            primitive_coeffs(_constant(unit_grid, 0.1, 0.5, 0.1))


class TestFirstStep:
    def test_reaches_target(self, grid):
        v = Field.zeros(grid, (2,))
        w = Field.zeros(grid, (2,))
        A = identity_field(grid, 0.04)
        epsilon = 0.02

        v_new, w_new, report = first_step(v, w, A, epsilon)
        assert not report.noop
        assert report.directions == ["e1", "e2"]
        assert report.remaining_deficit <= epsilon
        assert sup_norm(deficit(v_new, w_new, A)) == pytest.approx(report.remaining_deficit)
        assert sup_norm(v_new - v) <= epsilon
        assert report.frequencies[0] == report.frequencies[1]

    def test_small_deficit_is_noop(self, grid):
        v = Field.zeros(grid, (2,))
        w = Field.zeros(grid, (2,))
        v_new, w_new, report = first_step(v, w, identity_field(grid, 0.001), 0.01)
        assert report.noop
        assert v_new is v and w_new is w

    def test_requires_positive_definite_deficit(self, grid):
        v = Field.zeros(grid, (2,))
        w = Field.zeros(grid, (2,))
        with pytest.raises(PreconditionError):
            first_step(v, w, identity_field(grid, -0.1), 0.01)

    def test_unreachable_target(self, grid):
        v = Field.zeros(grid, (2,))
        w = Field.zeros(grid, (2,))
        with pytest.raises(TargetUnreachableError):
            first_step(v, w, identity_field(grid, 0.04), 1e-5)

    def test_non_constant_deficit(self, grid):
        v = Field.zeros(grid, (2,))
        w = Field.zeros(grid, (2,))
        A = Field.from_function(
            grid,
            lambda x1, x2: (0.05 + 0.01 * np.sin(x1))[..., np.newaxis, np.newaxis] * np.eye(2)
        )
        epsilon = 0.02

        v_new, w_new, report = first_step(v, w, A, epsilon)
        assert report.remaining_deficit <= epsilon
        assert sup_norm(v_new - v) <= epsilon
        assert sup_norm(w_new - w) <= epsilon
        assert 0 < report.gradient_constant <= 10.0

    def test_displacement_allowance_is_separate_from_target(self, grid):
        v = Field.zeros(grid, (2,))
        w = Field.zeros(grid, (2,))
        A = identity_field(grid, 0.04)

        v_new, _, report = first_step(v, w, A, 0.005, rho=0.01, displacement=0.05)
        assert report.remaining_deficit <= 0.005
        assert 0.005 < report.displacement <= 0.05
        assert sup_norm(v_new - v) == pytest.approx(report.displacement)

        with pytest.raises(TargetUnreachableError):
            first_step(v, w, A, 0.005, rho=0.01)

    def test_invalid_displacement(self, grid):
        v = Field.zeros(grid, (2,))
        w = Field.zeros(grid, (2,))
        with pytest.raises(ValueError):
            first_step(v, w, identity_field(grid, 0.04), 0.01, displacement=0.0)


class TestLadder:
    def _plan(self, unit_grid):
        amplitude = Field.constant(unit_grid, 0.2)
        return [("e1", np.array([1.0, 0.0]), amplitude, 0), ("e2", np.array([0.0, 1.0]), amplitude, 0)]

    def test_cross_term_raise_is_capped(self, unit_grid):
        frequencies = _ladder(self._plan(unit_grid), 10.0, 8.0, 1e-4, ceiling=100.0)
        assert frequencies == [10.0, 100.0]

    def test_growth_is_not_capped(self, unit_grid):
        frequencies = _ladder(self._plan(unit_grid), 10.0, 8.0, 1e-4, ceiling=50.0)
        assert frequencies == [10.0, 80.0]

    def test_separate_axes_share_frequency(self, unit_grid):
        amplitude = Field.constant(unit_grid, 0.2)
        plan = [("e1", np.array([1.0, 0.0]), amplitude, 0), ("e2", np.array([0.0, 1.0]), amplitude, 1)]
        assert _ladder(plan, 10.0, 8.0, 1e-4, ceiling=100.0) == [10.0, 10.0]
