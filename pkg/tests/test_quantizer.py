import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from distfield.exceptions import ConfigError
from distfield.quantizer import (
    QuantizerSpec,
    UniformQuantizer,
    cell_probabilities,
    expected_square,
    make_uniform,
    quantize,
)

Q8 = make_uniform(8, 1.0, 0.0)


def test_two_level_layout():
    q = make_uniform(2, 1.0, 0.0)
    np.testing.assert_array_equal(q.boundaries, [-np.inf, 1.0, np.inf])
    np.testing.assert_array_equal(q.reproduction_points, [0.5, 1.5])


def test_eight_level_layout(q8):
    np.testing.assert_array_equal(q8.interior, np.arange(1.0, 8.0))
    np.testing.assert_array_equal(q8.reproduction_points, np.arange(8) + 0.5)


def test_offset_shifts_everything():
    q = make_uniform(4, 0.5, -1.0)
    np.testing.assert_allclose(q.interior, [-0.5, 0.0, 0.5])
    np.testing.assert_allclose(q.reproduction_points, [-0.75, -0.25, 0.25, 0.75])


@pytest.mark.parametrize("M,step", [(8, 1.0), (16, 0.5), (5, 3.0)])
def test_reproduction_points_are_fixed_points(M, step):
    q = make_uniform(M, step)
    np.testing.assert_array_equal(quantize(q, q.reproduction_points), q.reproduction_points)


@pytest.mark.parametrize("M,step", [(1, 1.0), (2.5, 1.0), (8, 0.0), (8, -1.0), (8, np.nan)])
def test_invalid_layout(M, step):
    with pytest.raises(ConfigError):
        make_uniform(M, step)


def test_spec_invariants():
    with pytest.raises(ConfigError):
        QuantizerSpec([0.0, 2.0, 1.0], [0.5, 1.5])
    with pytest.raises(ConfigError):
        QuantizerSpec([0.0, 1.0, 2.0], [0.5, 2.5])
    single = QuantizerSpec([-np.inf, np.inf], [3.0])
    assert single.M == 1


def test_quantize_tie_break_and_tails(q8):
    assert quantize(q8, -100.0) == 0.5
    assert quantize(q8, 0.99) == 0.5
    assert quantize(q8, 1.0) == 1.5
    assert quantize(q8, 7.0) == 7.5
    assert quantize(q8, 1e9) == 7.5


def test_quantize_is_nearest_reproduction_point(q8, rng):
    r = rng.uniform(1.0, 7.0, 1_000_000)
    nearest = q8.reproduction_points[np.argmin(np.abs(r[:, None] - q8.reproduction_points), axis=1)]
    np.testing.assert_array_equal(quantize(q8, r), nearest)


@settings(max_examples=300, deadline=None)
@given(a=st.floats(-50, 50), b=st.floats(-50, 50))
def test_quantize_monotone(a, b):
    lo, hi = sorted((a, b))
    assert quantize(Q8, lo) <= quantize(Q8, hi)


def test_degenerate_noise_puts_mass_in_one_cell(q8):
    p = cell_probabilities(q8, 3.4, 1e-9)
    expected = np.zeros(8)
    expected[3] = 1.0
    np.testing.assert_allclose(p, expected, atol=1e-15)


def test_boundary_symmetry(q8):
    q = make_uniform(8, 1.0, offset=-4.0)  # symmetric about 0
    p = cell_probabilities(q, 0.0, 0.7)
    np.testing.assert_allclose(p, p[::-1], rtol=1e-14)
    p = cell_probabilities(q8, 4.0, 0.3)
    assert p[3] == pytest.approx(p[4], rel=1e-13)


def test_cell_probabilities_match_adaptive_quadrature(q8):
    pdf = stats.norm(4.0, 1.0).pdf
    ref = [integrate.quad(pdf, a, b, epsabs=1e-14, epsrel=1e-13)[0]
           for a, b in zip(q8.boundaries[:-1], q8.boundaries[1:])]
    np.testing.assert_allclose(cell_probabilities(q8, 4.0, 1.0), ref, atol=1e-10)


def test_probabilities_sum_to_one_on_random_sweep(rng):
    for M in (2, 8, 64):
        q = make_uniform(M, 8.0 / M)
        G = rng.uniform(-20, 30, 1000)
        sigma = rng.uniform(1e-3, 10, 1000)
        p = cell_probabilities(q, G, sigma)
        assert p.shape == (1000, M)
        assert np.all((p >= 0) & (p <= 1))
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_far_tail_cells_finite_in_log_space(q8):
    from distfield.quantizer import log_cell_probabilities
    from scipy.special import log_ndtr

    lp = log_cell_probabilities(q8, 200.0, 1.0)
    assert np.all(np.isfinite(lp))
    assert lp[-1] == 0.0
    # cell [6, 7): Phi(-193) - Phi(-194), dominated by its upper edge
    assert lp[-2] == pytest.approx(log_ndtr(-193.0), rel=1e-10)


def test_sigma_must_be_positive(q8):
    with pytest.raises(ValueError):
        cell_probabilities(q8, 1.0, 0.0)
    with pytest.raises(ValueError):
        expected_square(q8, 1.0, -1.0)


def test_expected_square_degenerate(q8):
    assert expected_square(q8, 5.2, 1e-9) == pytest.approx(5.5 ** 2, rel=1e-14)


def test_expected_square_symmetry():
    q = make_uniform(8, 1.0, offset=-4.0)
    p = cell_probabilities(q, 0.0, 1.3)
    half = np.sum(p[4:] * q.reproduction_points[4:] ** 2)
    assert expected_square(q, 0.0, 1.3) == pytest.approx(2 * half, rel=1e-13)


def test_expected_square_monte_carlo(q8):
    rng = np.random.default_rng(7)
    samples = quantize(q8, 4.0 + rng.standard_normal(10_000_000)) ** 2
    se = samples.std() / np.sqrt(samples.size)
    assert abs(expected_square(q8, 4.0, 1.0) - samples.mean()) < 3 * se


@settings(max_examples=200, deadline=None)
@given(G=st.floats(-30, 40), sigma=st.floats(1e-4, 20))
def test_expected_square_bounds(G, sigma):
    v = expected_square(Q8, G, sigma)
    nu2 = Q8.reproduction_points ** 2
    assert nu2.min() * (1 - 1e-12) <= v <= nu2.max() * (1 + 1e-12)


def test_uniform_quantizer_transformer():
    X = np.array([[0.2, 3.5], [7.9, 12.0]])
    qt = UniformQuantizer(levels=8, step=1.0).fit(X)
    np.testing.assert_array_equal(qt.transform(X), [[0.5, 3.5], [7.5, 7.5]])
    assert qt.get_params() == {"levels": 8, "offset": 0.0, "step": 1.0}
    with pytest.raises(ValueError):
        qt.transform(np.ones((2, 3)))
