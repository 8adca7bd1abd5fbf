import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbcmr.basis import FunctionCoefficients, SieveBasisSpec, design_matrix
from qbcmr.models import Dataset, MomentModel, WeightFunction, constant_pilot, make_design, simulate_dgp
from qbcmr.prior import WeakNormWeights
from qbcmr.sieve import (
    ObjectiveSpec,
    direct_objective,
    first_stage_fit,
    mhat,
    mhat_at_data,
    objective_from_residuals,
    quasi_objective,
    select_K,
)

NPIV = MomentModel("npiv")


def _data(n, seed=0, name="npiv-mild"):
    return simulate_dgp(make_design(name), n, np.random.default_rng(seed))


def test_first_stage_single_constant():
    fit = first_stage_fit(_data(30), SieveBasisSpec("cosine", 1, 1))
    np.testing.assert_array_equal(fit.whitened_design, np.ones((30, 1)))
    assert fit.K == 1 and fit.n == 30


def test_first_stage_needs_more_data_than_terms():
    with pytest.raises(ValueError):
        first_stage_fit(_data(5), SieveBasisSpec("cosine", 1, 5))


def test_whitened_gram_near_identity():
    fit = first_stage_fit(_data(10_000), SieveBasisSpec("cosine", 1, 5))
    assert np.linalg.norm(fit.gram.G_whitened - np.eye(5), 2) < 0.1


def test_mhat_vanishes_for_centred_residuals():
    data = Dataset(np.array([0.2, 0.5, 0.8]), np.array([-1.0, 0.0, 1.0]), np.array([0.1, 0.5, 0.9]))
    fit = first_stage_fit(data, SieveBasisSpec("cosine", 1, 1))
    h = FunctionCoefficients.zeros(SieveBasisSpec("cosine", 1, 4))
    assert mhat(fit, NPIV, h, 0.3)[0] == pytest.approx(0.0, abs=1e-15)


def test_mhat_reproduces_constant_residual():
    data = _data(200, seed=1)
    basis = SieveBasisSpec("cosine", 1, 1)
    const = Dataset(data.X, np.full(200, 2.5), data.W)
    fit = first_stage_fit(const, SieveBasisSpec("cosine", 1, 6))
    m = mhat_at_data(fit, NPIV, FunctionCoefficients.zeros(basis))
    np.testing.assert_allclose(m, 2.5, atol=1e-12)


def test_mhat_hand_normal_equations():
    W = np.array([0.0, 0.5, 1.0])
    Y = np.array([1.0, 2.0, 4.0])
    data = Dataset(np.array([0.3, 0.3, 0.3]), Y, W)
    fit = first_stage_fit(data, SieveBasisSpec("cosine", 1, 2))
    # b(w) = (1, sqrt2 cos(pi w)); rows (1, s), (1, 0), (1, -s)
    s = math.sqrt(2)
    B = np.array([[1, s], [1, 0], [1, -s]])
    beta = np.linalg.solve(B.T @ B, B.T @ Y)
    # beta = (7/3, -3/(2 s)) by hand
    np.testing.assert_allclose(beta, [7 / 3, -3 / (2 * s)], atol=1e-14)
    h = FunctionCoefficients.zeros(SieveBasisSpec("cosine", 1, 1))
    assert mhat(fit, NPIV, h, 0.0)[0] == pytest.approx(7 / 3 - 1.5, abs=1e-12)
    assert mhat(fit, NPIV, h, 0.5)[0] == pytest.approx(7 / 3, abs=1e-12)


def test_objective_single_term_is_squared_mean():
    data = _data(100, seed=2)
    spec = ObjectiveSpec(first_stage_fit(data, SieveBasisSpec("cosine", 1, 1)))
    h = FunctionCoefficients.zeros(SieveBasisSpec("cosine", 1, 3))
    assert quasi_objective(spec, NPIV, h) == pytest.approx(np.mean(data.Y) ** 2, rel=1e-12)


def test_cu_with_fixed_variance_equals_fixed_mode():
    data = _data(300, seed=3)
    fit = first_stage_fit(data, SieveBasisSpec("cosine", 1, 4))
    cu = ObjectiveSpec(fit, WeightFunction("cu", variance_fn=lambda w, rho: np.array([[0.4]])), "cu")
    fixed = ObjectiveSpec(fit, WeightFunction("optimal", pilot=constant_pilot(0.4)))
    rng = np.random.default_rng(4)
    for _ in range(5):
        h = FunctionCoefficients(SieveBasisSpec("cosine", 1, 6), rng.standard_normal(6))
        assert quasi_objective(cu, NPIV, h) == pytest.approx(quasi_objective(fixed, NPIV, h), rel=1e-12)


@pytest.mark.parametrize("weighting", ["identity", "optimal", "cu"])
def test_fast_path_matches_direct_evaluation(weighting):
    data = _data(400, seed=5, name="npiv-mild-hetero")
    basisW = SieveBasisSpec("cosine", 1, 5)
    fit = first_stage_fit(data, basisW)
    if weighting == "identity":
        spec = ObjectiveSpec(fit)
    elif weighting == "optimal":
        pilot = constant_pilot(0.3)
        spec = ObjectiveSpec(fit, WeightFunction("optimal", pilot=pilot))
    else:
        spec = ObjectiveSpec(fit, WeightFunction("cu", basis=basisW), "cu")
    rng = np.random.default_rng(6)
    for _ in range(3):
        h = FunctionCoefficients(SieveBasisSpec("cosine", 1, 8), 0.5 * rng.standard_normal(8))
        fast, slow = quasi_objective(spec, NPIV, h), direct_objective(spec, NPIV, h)
        assert fast == pytest.approx(slow, rel=1e-10, abs=1e-14)


@pytest.mark.invariant
@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 10_000))
def test_projection_is_a_contraction(K, seed):
    rng = np.random.default_rng(seed)
    n = 60
    data = Dataset(rng.uniform(size=n), rng.standard_normal(n), rng.uniform(size=n))
    fit = first_stage_fit(data, SieveBasisSpec("cosine", 1, K))
    v = rng.standard_normal((n, 1))
    p = fit.project(v)
    assert np.sum(p**2) <= np.sum(v**2) * (1 + 1e-10)
    # idempotent
    np.testing.assert_allclose(fit.project(p), p, atol=1e-9)


@pytest.mark.invariant
def test_npiv_objective_is_quadratic_along_lines():
    data = _data(500, seed=7)
    spec = ObjectiveSpec(first_stage_fit(data, SieveBasisSpec("cosine", 1, 4)))
    rng = np.random.default_rng(8)
    basis = SieveBasisSpec("cosine", 1, 6)
    h0 = FunctionCoefficients(basis, rng.standard_normal(6))
    dh = FunctionCoefficients(basis, rng.standard_normal(6))
    t = np.arange(-2.0, 3.0)
    q = [quasi_objective(spec, NPIV, h0 + s * dh) for s in t]
    c = np.polyfit(t, q, 4)
    scale = max(abs(v) for v in q)
    assert abs(c[0]) < 1e-8 * scale and abs(c[1]) < 1e-8 * scale


def test_objective_from_residuals_shape_agnostic():
    data = _data(50, seed=9)
    spec = ObjectiveSpec(first_stage_fit(data, SieveBasisSpec("cosine", 1, 3)))
    a = objective_from_residuals(spec, NPIV, data.Y)
    b = objective_from_residuals(spec, NPIV, data.Y[:, None])
    assert a == b


def test_bspline_first_stage():
    data = _data(500, seed=10)
    fit = first_stage_fit(data, SieveBasisSpec("bspline", 1, 6))
    # B-splines sum to one, so a constant residual projects onto itself
    np.testing.assert_allclose(fit.project(np.full((500, 1), -1.5)), -1.5, atol=1e-10)
    raw = design_matrix(fit.basisW, data.W)
    np.testing.assert_allclose(raw.sum(1), 1.0, atol=1e-12)


# ---------------------------------------------------------------------------
# sieve dimension


def test_select_K_examples():
    assert select_K(1024, 1.0, WeakNormWeights.mild(1.0)) == 4
    assert select_K(100, 0.5, WeakNormWeights.mild(0.0)) == 10
    with pytest.raises(ValueError):
        select_K(1, 1.0, WeakNormWeights.mild(1.0))


def test_select_K_severe_grows_logarithmically():
    w = WeakNormWeights.severe(1.0, 1.0)
    ks = [select_K(2**p, 1.0, w) for p in range(6, 21, 2)]
    assert ks == sorted(ks) and ks[-1] <= 8
    # far below the mild choice
    assert ks[-1] < select_K(2**20, 1.0, WeakNormWeights.mild(1.0))


def test_select_K_stops_at_custom_sequence_end():
    w = WeakNormWeights.from_sequence([1.0, 1.0, 1.0])
    assert select_K(10**8, 0.5, w) == 3


@pytest.mark.invariant
@settings(max_examples=60, deadline=None)
@given(st.integers(2, 10**6), st.integers(2, 10**6), st.floats(0.25, 4), st.floats(0, 3))
def test_select_K_monotone_in_n(n1, n2, alpha, zeta):
    lo, hi = sorted((n1, n2))
    w = WeakNormWeights.mild(zeta)
    assert select_K(lo, alpha, w) <= select_K(hi, alpha, w)


@pytest.mark.invariant
@settings(max_examples=60, deadline=None)
@given(st.integers(2, 10**6), st.floats(0.25, 4), st.floats(0, 3), st.floats(0, 3))
def test_select_K_non_increasing_in_ill_posedness(n, alpha, z1, z2):
    lo, hi = sorted((z1, z2))
    assert select_K(n, alpha, WeakNormWeights.mild(hi)) <= select_K(n, alpha, WeakNormWeights.mild(lo))
