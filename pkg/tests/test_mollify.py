"""
Simítás és kommutátor
"""
import numpy as np
import pytest
import scipy.ndimage

from src.core.errors import MarginError
from src.core.experiment import fit_rate
from src.core.fields import Field, Grid2, fd_gradient, sup_norm
from src.core.mollify import Mollifier, commutator, mollify


def test_kernel_is_probability_density(unit_grid):
    m = Mollifier(0.05, unit_grid.h)
    assert m.weights.sum() == pytest.approx(1.0)
    assert np.all(m.weights >= 0)
    assert np.allclose(m.weights, m.weights[::-1, ::-1])
    assert np.allclose(m.weights, m.weights.T)


def test_unresolved_kernel(unit_grid):
    with pytest.raises(MarginError):
        Mollifier(1.5 * unit_grid.h, unit_grid.h)


def test_margin_shrinks_by_l(unit_grid):
    l = 0.05
    out = mollify(Field.zeros(unit_grid), l)
    assert out.grid.margin <= unit_grid.margin - l + 1e-12
    assert out.grid.margin > unit_grid.margin - l - unit_grid.h


def test_not_enough_margin(unit_grid):
    with pytest.raises(MarginError):
        mollify(Field.zeros(unit_grid), 2.0 * unit_grid.margin)


def test_preserves_affine_fields(unit_grid):
    f = Field.from_function(unit_grid, lambda x1, x2: 1.0 + 3.0 * x1 - x2)
    smoothed = mollify(f, 0.05)
    expected = f.restrict(smoothed.grid)
    assert np.allclose(smoothed.data, expected.data, atol=1e-10)


def test_matrix_values_are_smoothed_componentwise(unit_grid):
    A = Field.constant(unit_grid, np.array([[1.0, 2.0], [2.0, 5.0]]))
    smoothed = mollify(A, 0.05)
    assert smoothed.value_shape == (2, 2)
    assert np.allclose(smoothed.data, A.data[0, 0], atol=1e-12)


def test_commutator_of_coordinate_is_second_moment(unit_grid):
    l = 0.05
    x = Field.from_function(unit_grid, lambda x1, x2: x1)
    c = commutator(x, x, l)
    sigma2 = Mollifier(l, unit_grid.h).second_moment()
    assert sigma2 > 0
    assert np.allclose(c.data, sigma2, atol=1e-10)


def test_commutator_with_constant_vanishes(unit_grid):
    f = Field.from_function(unit_grid, lambda x1, x2: np.sin(3 * x1) * x2)
    one = Field.constant(unit_grid, 1.0)
    assert np.max(np.abs(commutator(f, one, 0.05).data)) < 1e-10


@pytest.fixture
def wide_grid():
    return Grid2.build(0.0, 1.0, 0.0, 1.0, margin=0.1, nodes=401)


def _smooth(grid):
    return Field.from_function(grid, lambda x1, x2: np.sin(3.0 * x1) * np.cos(2.0 * x2))


def test_fft_matches_direct_correlation(wide_grid):
    l = 0.05
    f = Field.from_function(wide_grid, lambda x1, x2: np.exp(x1) * np.sin(5.0 * x2) + x1 * x2 ** 2)
    m = Mollifier(l, wide_grid.h)
    smoothed = m.apply(f)

    direct = scipy.ndimage.correlate(f.data, m.weights, mode="constant")
    cut = wide_grid.pad - smoothed.grid.pad
    direct = direct[cut:wide_grid.nx - cut, cut:wide_grid.ny - cut]
    assert direct.shape == smoothed.data.shape
    assert np.allclose(smoothed.data, direct, atol=1e-12, rtol=0.0)


def test_mollification_is_linear(wide_grid):
    f = _smooth(wide_grid)
    g = Field.from_function(wide_grid, lambda x1, x2: x1 ** 3 - np.cos(4.0 * x2))
    combined = mollify(f * 2.0 + g * -3.0, 0.05)
    separate = mollify(f, 0.05) * 2.0 + mollify(g, 0.05) * -3.0
    assert np.allclose(combined.data, separate.data, atol=1e-12)


def test_smoothing_error_is_second_order_in_l(wide_grid):
    f = _smooth(wide_grid)
    scales = [8 * wide_grid.h, 16 * wide_grid.h, 32 * wide_grid.h]
    errors = []
    for l in scales:
        smoothed = mollify(f, l)
        errors.append(sup_norm(smoothed - f.restrict(smoothed.grid)))
    assert fit_rate(scales, errors).within(2.0, 0.2)


def test_commutator_is_second_order_in_l(wide_grid):
    f = _smooth(wide_grid)
    g = Field.from_function(wide_grid, lambda x1, x2: np.cos(x1 + 2.0 * x2))
    grad_f = sup_norm(fd_gradient(f))
    grad_g = sup_norm(fd_gradient(g))
    scales = [8 * wide_grid.h, 16 * wide_grid.h, 32 * wide_grid.h]
    sizes = []
    for l in scales:
        size = sup_norm(commutator(f, g, l))
        assert size <= l ** 2 * grad_f * grad_g
        sizes.append(size)
    assert fit_rate(scales, sizes).within(2.0, 0.2)
