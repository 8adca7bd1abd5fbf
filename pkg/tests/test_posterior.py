import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from qbcmr.basis import FunctionCoefficients, SieveBasisSpec
from qbcmr.harness import build_design, load_config
from qbcmr.models import Dataset, MomentModel, WeightFunction, make_design, simulate_dgp
from qbcmr.prior import GaussianSeriesPrior
from qbcmr.pipeline import build_posterior, fit_quasi_bayes, resolve_K
from qbcmr.posterior import (
    ChainResult,
    ChainState,
    effective_sample_size,
    exact_gaussian_posterior,
    initial_state,
    log_quasi_likelihood,
    pcn_step,
    posterior_mean,
    run_chain,
)

NPIV = MomentModel("npiv")
CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@dataclass
class FlatTarget:
    prior: GaussianSeriesPrior

    def loglike_z(self, z):
        return 0.0


@dataclass
class StepTarget:
    """N(0, 1) prior tilted by exp(-a) on z > 0."""

    prior: GaussianSeriesPrior
    a: float = 1.0

    def loglike_z(self, z):
        return -self.a if z[0] > 0 else 0.0


def _prior(J, alpha=1.0, scale=1.0):
    return GaussianSeriesPrior(SieveBasisSpec("cosine", 1, J), alpha, scale)


def _spec(n, seed=0, K=3, J=None, name="npiv-mild", weights=None):
    data = simulate_dgp(make_design(name), n, np.random.default_rng(seed))
    return build_posterior(data, NPIV, 1.0, K, weights or WeightFunction(), J=J)


def test_loglike_zero_when_moments_fit_exactly():
    design = make_design("npiv-mild", noise_sd=0.0, terms=8)
    data = simulate_dgp(design, 100, np.random.default_rng(1))
    spec = build_posterior(data, NPIV, 1.0, 3, WeightFunction(), J=16)
    assert log_quasi_likelihood(spec, design.h0) == pytest.approx(0.0, abs=1e-20)


def test_loglike_scales_with_sample_size():
    data = simulate_dgp(make_design("npiv-mild"), 150, np.random.default_rng(2))
    twice = Dataset(np.tile(data.X, (2, 1)), np.tile(data.Y, 2), np.tile(data.W, (2, 1)))
    h = FunctionCoefficients(SieveBasisSpec("cosine", 1, 4), [0.1, 0.2, -0.3, 0.05])
    one = build_posterior(data, NPIV, 1.0, 3, WeightFunction(), J=16)
    two = build_posterior(twice, NPIV, 1.0, 3, WeightFunction(), J=16)
    # duplicating the data leaves Q_n unchanged and doubles n
    assert log_quasi_likelihood(two, h) == pytest.approx(2 * log_quasi_likelihood(one, h), rel=1e-10)
    assert log_quasi_likelihood(one, h) < 0


def test_loglike_rejects_oversized_h():
    spec = _spec(100, J=8)
    with pytest.raises(ValueError):
        log_quasi_likelihood(spec, FunctionCoefficients.zeros(SieveBasisSpec("cosine", 1, 9)))


def test_chain_state_validation():
    with pytest.raises(ValueError):
        ChainState(np.zeros(2), math.inf, 0.5)
    with pytest.raises(ValueError):
        ChainState(np.zeros(2), 0.0, 1.5)


def test_pcn_zero_step_is_frozen():
    spec = _spec(200)
    z0 = np.random.default_rng(3).standard_normal(spec.prior.size)
    state = initial_state(spec, 0.0, z0)
    rng = np.random.default_rng(4)
    for _ in range(20):
        state = pcn_step(state, spec, rng)
        np.testing.assert_array_equal(state.z, z0)


def test_pcn_unit_step_flat_target_samples_prior():
    prior = _prior(4, scale=0.5)
    target = FlatTarget(prior)
    state = initial_state(target, 1.0)
    rng = np.random.default_rng(5)
    for _ in range(10):
        state = pcn_step(state, target, rng)
        assert state.accepted
    chain = run_chain(target, iters=100_000, burn=1, thin=1, rng=5, step0=1.0)
    N = chain.n_draws
    np.testing.assert_allclose(chain.draws.mean(0), 0.0, atol=4 * prior.sd.max() / math.sqrt(N))
    np.testing.assert_allclose(chain.draws.var(0), 0.25 * prior.eigenvalues, rtol=4 * math.sqrt(2 / N))


def test_flat_target_accepts_everything():
    chain = run_chain(FlatTarget(_prior(6)), iters=2000, burn=500, thin=1, rng=6)
    assert chain.accept_rate == 1.0
    assert chain.beta_final == 1.0


@pytest.mark.invariant
@pytest.mark.parametrize("seed", [1, 2, 3])
def test_flat_chain_leaves_prior_invariant(seed):
    prior = _prior(5, alpha=1.5, scale=0.7)
    chain = run_chain(FlatTarget(prior), iters=101_000, burn=1000, thin=10, rng=seed, step0=0.3)
    assert chain.n_draws == 10_000
    assert stats.kstest(chain.draws[:, 0] / prior.sd[0], "norm").pvalue > 0.01


@pytest.mark.invariant
def test_step_target_mass():
    target = StepTarget(_prior(1))
    chain = run_chain(target, iters=1_000_000, burn=2000, thin=1, rng=7)
    expected = math.exp(-1.0) / (1 + math.exp(-1.0))
    assert np.mean(chain.draws[:, 0] > 0) == pytest.approx(expected, abs=0.02)


def test_run_chain_argument_checks():
    target = FlatTarget(_prior(2))
    with pytest.raises(ValueError):
        run_chain(target, iters=10, burn=10, rng=0)
    with pytest.raises(ValueError):
        run_chain(target, iters=10, burn=0, thin=0, rng=0)
    with pytest.raises(ValueError):
        run_chain(target, iters=10, burn=0)


def test_chain_is_deterministic_given_seed():
    spec = _spec(300)
    a = run_chain(spec, iters=1500, burn=500, thin=2, rng=11)
    b = run_chain(spec, iters=1500, burn=500, thin=2, rng=11)
    np.testing.assert_array_equal(a.draws, b.draws)
    assert a.seed == 11 and a.diagnostics()["n_draws"] == 500


@pytest.mark.parametrize("n", [200, 1000])
def test_chain_matches_exact_gaussian_posterior(n):
    spec = _spec(n, seed=12, K=3, J=32)
    exact = exact_gaussian_posterior(spec)
    chain = run_chain(spec, iters=20_000, burn=5_000, thin=5, rng=13)
    assert 0.15 <= chain.accept_rate <= 0.35
    mean = chain.draws.mean(0)
    sd = chain.draws.std(0)
    for i in range(spec.prior.size):
        ess = effective_sample_size(chain.draws[:, i])
        assert abs(mean[i] - exact.mean[i]) <= 3 * exact.sd[i] / math.sqrt(ess)
        assert sd[i] == pytest.approx(exact.sd[i], rel=0.3)


def test_posterior_mean_single_draw():
    draw = np.array([[0.5, -1.0, 2.0]])
    chain = ChainResult(draw, 1.0, 1.0, 0, 0.5, SieveBasisSpec("cosine", 1, 3))
    np.testing.assert_array_equal(posterior_mean(chain).coeffs, draw[0])


def test_posterior_mean_matches_running_update():
    rng = np.random.default_rng(14)
    draws = 3.0 + rng.standard_normal((5000, 4))
    chain = ChainResult(draws, 0.3, 100.0, 0, 0.5, SieveBasisSpec("cosine", 1, 4))
    running = np.zeros(4)
    for k, row in enumerate(draws, 1):
        running += (row - running) / k
    np.testing.assert_allclose(posterior_mean(chain).coeffs, running, rtol=1e-12)


def test_ess_of_iid_and_correlated_series():
    rng = np.random.default_rng(15)
    iid = rng.standard_normal(10_000)
    assert effective_sample_size(iid) == pytest.approx(10_000, rel=0.1)
    ar = np.zeros(10_000)
    e = rng.standard_normal(10_000)
    for t in range(1, 10_000):
        ar[t] = 0.9 * ar[t - 1] + e[t]
    # AR(1) with phi = 0.9: ESS = n (1 - phi) / (1 + phi)
    assert effective_sample_size(ar) == pytest.approx(10_000 * 0.1 / 1.9, rel=0.3)
    assert effective_sample_size(np.ones(100)) == 100


def test_exact_posterior_without_data_is_prior():
    spec = _spec(200, J=16)
    post = exact_gaussian_posterior(spec, n_weight=0.0)
    np.testing.assert_allclose(post.mean, 0.0, atol=1e-15)
    np.testing.assert_allclose(post.cov, np.diag(spec.prior.variances), rtol=1e-12, atol=1e-18)


def test_exact_posterior_matches_grid_integration():
    spec = _spec(200, seed=16, K=2, J=2)
    post = exact_gaussian_posterior(spec)
    # asymmetric span so symmetry alone cannot reproduce the mean
    axes = [np.linspace(m - 7 * s, m + 9 * s, 200) for m, s in zip(post.mean, post.sd)]
    T1, T2 = np.meshgrid(*axes, indexing="ij")
    basis = spec.prior.basis
    logp = np.empty_like(T1)
    for idx in np.ndindex(T1.shape):
        theta = np.array([T1[idx], T2[idx]])
        logp[idx] = log_quasi_likelihood(spec, FunctionCoefficients(basis, theta)) - 0.5 * np.sum(
            theta**2 / spec.prior.variances
        )
    p = np.exp(logp - logp.max())
    p /= p.sum()
    m = np.array([np.sum(p * T1), np.sum(p * T2)])
    d1, d2 = T1 - m[0], T2 - m[1]
    cov = np.array([[np.sum(p * d1 * d1), np.sum(p * d1 * d2)], [np.sum(p * d1 * d2), np.sum(p * d2 * d2)]])
    # relative to the posterior scale
    assert np.all(np.abs(m - post.mean) <= 1e-3 * post.sd)
    assert np.linalg.norm(cov - post.cov) <= 1e-3 * np.linalg.norm(post.cov)


@pytest.mark.invariant
@pytest.mark.parametrize("seed", range(4))
def test_exact_posterior_contracts_prior(seed):
    spec = _spec(300, seed=seed, K=4, J=16)
    post = exact_gaussian_posterior(spec)
    gap = np.diag(spec.prior.variances) - post.cov
    assert np.linalg.eigvalsh(gap).min() >= -1e-12 * spec.prior.variances.max()


def test_exact_posterior_rejects_nonlinear_models():
    data = simulate_dgp(make_design("npqiv-mild"), 200, np.random.default_rng(17))
    q = build_posterior(data, MomentModel("npqiv", 0.5), 1.0, 3, WeightFunction(), J=8)
    with pytest.raises(ValueError):
        exact_gaussian_posterior(q)
    basisW = SieveBasisSpec("cosine", 1, 3)
    cu = build_posterior(data, NPIV, 1.0, 3, WeightFunction("cu", basis=basisW), "cu", J=8)
    with pytest.raises(ValueError):
        exact_gaussian_posterior(cu)


@pytest.mark.parametrize("name", ["fit_npqiv.yaml", "coverage_npiv.yaml", "rate_severe.yaml"])
def test_adapted_acceptance_on_shipped_configs(name):
    cfg = load_config(CONFIGS / name)
    design = build_design(cfg)
    n = cfg.n or cfg.n_grid[0]
    data = simulate_dgp(design, n, np.random.default_rng(cfg.seed))
    K = resolve_K(cfg.K, n, cfg.alpha, design.ill_posedness)
    fit = fit_quasi_bayes(data, design.model, cfg.alpha, K, cfg.weighting, chain=cfg.chain, rng=cfg.seed)
    assert 0.15 <= fit.chain.accept_rate <= 0.35
