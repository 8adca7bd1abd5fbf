import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qbcmr.basis import FunctionCoefficients, SieveBasisSpec
from qbcmr.prior import (
    GaussianSeriesPrior,
    WeakNormWeights,
    rkhs_norm,
    sample_prior,
    scaled_prior,
    sobolev_norm,
    truncation_level,
    weak_norm,
)

B16 = SieveBasisSpec("cosine", 1, 16)


def test_truncation_level():
    assert truncation_level(3) == 64
    assert truncation_level(16) == 64
    assert truncation_level(20) == 80


def test_zero_scale_gives_zero_function():
    h = sample_prior(GaussianSeriesPrior(B16, 1.0, 0.0), np.random.default_rng(0))
    assert np.all(h.coeffs == 0)


def test_second_coefficient_sd():
    prior = GaussianSeriesPrior(B16, 1.0, 0.7)
    assert prior.sd[1] == pytest.approx(0.7 * 0.353553, abs=1e-6)
    assert prior.eigenvalues[1] == 0.125


def test_eigenvalues_positive_and_decreasing():
    lam = GaussianSeriesPrior(SieveBasisSpec("cosine", 2, 30), 1.5).eigenvalues
    assert np.all(lam > 0) and np.all(np.diff(lam) < 0)


def test_invalid_prior_arguments():
    with pytest.raises(ValueError):
        GaussianSeriesPrior(B16, 0.0)
    with pytest.raises(ValueError):
        GaussianSeriesPrior(B16, 1.0, -1.0)


@pytest.mark.invariant
def test_draw_moments():
    prior = GaussianSeriesPrior(B16, 1.0, 0.5)
    rng = np.random.default_rng(11)
    N = 100_000
    Z = np.array([sample_prior(prior, rng).coeffs for _ in range(N)])
    mean, var = Z.mean(0), Z.var(0, ddof=1)
    for i in range(10):
        assert abs(mean[i]) < 4 * prior.sd[i] / math.sqrt(N)
        assert var[i] == pytest.approx(prior.variances[i], rel=0.05)
    assert var[1] == pytest.approx(0.25 * 0.125, rel=0.03)


def test_sample_prior_uses_stream_in_order():
    prior = GaussianSeriesPrior(B16, 2.0, 1.3)
    h = sample_prior(prior, np.random.default_rng(5))
    z = np.random.default_rng(5).standard_normal(16)
    np.testing.assert_array_equal(h.coeffs, prior.sd * z)


def test_scaled_prior_scale():
    assert scaled_prior(1.0, 8, 1, 3).scale == pytest.approx(1 / math.sqrt(math.log(3)), abs=1e-12)
    assert scaled_prior(1.0, 8, 1, 3).scale == pytest.approx(0.954065, abs=1e-6)
    assert scaled_prior(1.0, 8, 4, 3).scale == pytest.approx(0.477032, abs=1e-6)
    s1, s2 = scaled_prior(1.0, 64, 5, 100).scale, scaled_prior(1.0, 64, 10, 100).scale
    assert s2 / s1 == pytest.approx(1 / math.sqrt(2), rel=1e-14)
    with pytest.raises(ValueError):
        scaled_prior(1.0, 8, 1, 1)


def test_norm_examples():
    e1 = FunctionCoefficients.unit(B16, 1)
    e2 = FunctionCoefficients.unit(B16, 2)
    for beta in (0.0, 1.0, 3.7):
        assert sobolev_norm(e1, beta) == 1.0
    assert sobolev_norm(e2, 1.0) == pytest.approx(2.0)
    assert rkhs_norm(e1, 1.0) == 1.0
    assert rkhs_norm(e2, 1.0) == pytest.approx(2.8284271, abs=1e-7)
    assert weak_norm(e2, WeakNormWeights.mild(1.0)) == pytest.approx(0.5)
    assert weak_norm(e2, WeakNormWeights.severe(1.0, 1.0)) == pytest.approx(math.exp(-2), abs=1e-12)
    h = FunctionCoefficients(B16, np.linspace(-1, 1, 16))
    assert weak_norm(h, WeakNormWeights.mild(0.0)) == pytest.approx(h.l2_norm())


def test_sobolev_matches_loop():
    rng = np.random.default_rng(7)
    h = FunctionCoefficients(B16, rng.standard_normal(16))
    naive = math.sqrt(sum((i + 1) ** 3.0 * c * c for i, c in enumerate(h.coeffs)))
    assert sobolev_norm(h, 1.5) == pytest.approx(naive, rel=1e-13)


coef16 = arrays(float, 16, elements=st.floats(-5, 5, allow_nan=False))


@pytest.mark.invariant
@settings(max_examples=60, deadline=None)
@given(coef16, st.floats(0.1, 4))
def test_rkhs_dominates_sobolev(c, alpha):
    h = FunctionCoefficients(B16, c)
    assert rkhs_norm(h, alpha) >= sobolev_norm(h, alpha) - 1e-12


@pytest.mark.invariant
@settings(max_examples=60, deadline=None)
@given(coef16, st.floats(0, 3), st.floats(0, 3))
def test_sobolev_norm_monotone_in_beta(c, b1, b2):
    h = FunctionCoefficients(B16, c)
    lo, hi = sorted((b1, b2))
    assert sobolev_norm(h, lo) <= sobolev_norm(h, hi) * (1 + 1e-12) + 1e-12


@pytest.mark.invariant
@settings(max_examples=60, deadline=None)
@given(coef16, st.floats(0, 3), st.floats(0, 2))
def test_weak_norm_below_l2(c, zeta, R):
    h = FunctionCoefficients(B16, c)
    for w in (WeakNormWeights.mild(zeta), WeakNormWeights.severe(R, zeta)):
        assert weak_norm(h, w) <= h.l2_norm() * (1 + 1e-12) + 1e-12


def test_custom_weights():
    w = WeakNormWeights.from_sequence([1.0, 0.5, 0.25])
    np.testing.assert_array_equal(w.sequence(3), [1.0, 0.5, 0.25])
    with pytest.raises(IndexError):
        w.at(4)
    with pytest.raises(ValueError):
        WeakNormWeights.from_sequence([0.5, 1.0])


@pytest.mark.invariant
def test_regularity_proxy_in_truncation():
    # E||G||_beta^2 = sum_i i^(2 beta - 1 - 2 alpha): diverges for beta >= alpha,
    # converges for beta <= alpha - 1/2
    rng = np.random.default_rng(21)
    alpha = 2.0
    sizes = [2**k for k in range(5, 11)]

    def mean_sq(beta, J):
        prior = GaussianSeriesPrior(SieveBasisSpec("cosine", 1, J), alpha)
        draws = rng.standard_normal((400, J)) * prior.sd
        i = np.arange(1, J + 1)
        return np.mean(np.sum(i ** (2 * beta) * draws**2, axis=1))

    rough = [mean_sq(2.5, J) for J in sizes]
    smooth = [mean_sq(1.0, J) for J in sizes]
    assert all(b > a for a, b in zip(rough, rough[1:]))
    assert rough[-1] > 10 * rough[0]
    assert max(smooth) / min(smooth) < 1.2
