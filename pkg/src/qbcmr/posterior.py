"""Quasi-posterior over truncated prior coefficients and a pCN sampler.

The sampler works on standardised coefficients ``z`` (h = sum_i sd_i z_i e_i,
with ``sd`` the prior standard deviations), where the prior is N(0, I).  The
preconditioned Crank-Nicolson proposal leaves that prior invariant, so the
acceptance ratio only involves the quasi-likelihood exp(-(n/2) Q_n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Protocol

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from qbcmr.basis import FunctionCoefficients, SieveBasisSpec, design_matrix
from qbcmr.models import MomentModel
from qbcmr.prior import GaussianSeriesPrior
from qbcmr.sieve import ObjectiveSpec, objective_from_residuals

ESS_WARN = 50.0
ESS_TRACKED = 10

DEFAULT_ITERS = 20_000
DEFAULT_BURN = 5_000
DEFAULT_THIN = 5


class Target(Protocol):
    """Anything the sampler can run on: a prior plus a log-likelihood in z."""

    prior: GaussianSeriesPrior

    def loglike_z(self, z: np.ndarray) -> float: ...


@dataclass(frozen=True, eq=False)
class QuasiPosteriorSpec:
    """Quasi-posterior proportional to exp(-(n/2) Q_n(h)) times the prior."""

    objective: ObjectiveSpec
    model: MomentModel
    prior: GaussianSeriesPrior

    def __post_init__(self):
        if self.prior.size < self.objective.fit.K:
            raise ValueError(f"prior truncation J={self.prior.size} is below K={self.objective.fit.K}")
        if self.prior.basis.dim != self.objective.fit.data.d:
            raise ValueError("prior basis dimension does not match X")

    @property
    def n(self) -> int:
        return self.objective.fit.n

    @cached_property
    def x_design(self) -> np.ndarray:
        """Prior basis at the data, scaled so that h(X) = x_design @ z."""
        return design_matrix(self.prior.basis, self.objective.fit.data.X) * self.prior.sd

    def loglike_theta(self, theta: np.ndarray) -> float:
        return self.loglike_z(np.asarray(theta, dtype=float) / self.prior.sd)

    def loglike_z(self, z: np.ndarray) -> float:
        hx = self.x_design @ z
        rho = self.model.residuals(self.objective.fit.data.Y, hx)
        return -0.5 * self.n * objective_from_residuals(self.objective, self.model, rho)

    def to_function(self, z: np.ndarray) -> FunctionCoefficients:
        return FunctionCoefficients(self.prior.basis, self.prior.sd * z)


def log_quasi_likelihood(spec: QuasiPosteriorSpec, h: FunctionCoefficients) -> float:
    """-(n/2) Q_n(h)."""
    if h.basis.family != spec.prior.basis.family or h.basis.dim != spec.prior.basis.dim:
        raise ValueError("h must live on the prior basis")
    if h.basis.size < spec.prior.size:
        h = h.padded(spec.prior.size)
    elif h.basis.size > spec.prior.size:
        raise ValueError(f"h has {h.basis.size} coefficients, prior keeps {spec.prior.size}")
    return spec.loglike_theta(h.coeffs)


# ---------------------------------------------------------------------------
# sampler


@dataclass(frozen=True)
class ChainState:
    z: np.ndarray
    log_like: float
    step: float
    accepted: bool = False

    def __post_init__(self):
        if not math.isfinite(self.log_like):
            raise ValueError("log_like must be finite")
        if not 0.0 <= self.step <= 1.0:
            raise ValueError(f"step must lie in [0, 1], got {self.step}")


def initial_state(spec: Target, step: float = 0.5, z: np.ndarray | None = None) -> ChainState:
    z = np.zeros(spec.prior.size) if z is None else np.asarray(z, dtype=float)
    return ChainState(z, spec.loglike_z(z), step)


def _pcn_propose(state: ChainState, spec: Target, rng: np.random.Generator):
    beta = state.step
    xi = rng.standard_normal(state.z.shape[0])
    z_new = math.sqrt(1.0 - beta * beta) * state.z + beta * xi
    ll_new = spec.loglike_z(z_new)
    log_ratio = ll_new - state.log_like
    accept_prob = 1.0 if log_ratio >= 0 else math.exp(log_ratio)
    return z_new, ll_new, accept_prob


def pcn_step(state: ChainState, spec: Target, rng: np.random.Generator) -> ChainState:
    """One preconditioned Crank-Nicolson Metropolis step."""
    z_new, ll_new, prob = _pcn_propose(state, spec, rng)
    if rng.uniform() < prob:
        return ChainState(z_new, ll_new, state.step, True)
    return replace(state, accepted=False)


@dataclass(frozen=True)
class ChainResult:
    draws: np.ndarray = field(repr=False)
    accept_rate: float
    ess_min: float
    seed: int | None
    beta_final: float
    basis: SieveBasisSpec
    low_ess: bool = False

    def __post_init__(self):
        if self.draws.ndim != 2 or self.draws.shape[0] == 0:
            raise ValueError("a chain result needs at least one retained draw")
        if not 0.0 <= self.accept_rate <= 1.0:
            raise ValueError("accept_rate must lie in [0, 1]")

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    def diagnostics(self) -> dict:
        return {
            "accept_rate": self.accept_rate,
            "ess_min": self.ess_min,
            "beta_final": self.beta_final,
            "seed": self.seed,
            "n_draws": self.n_draws,
            "low_ess": self.low_ess,
        }


def _as_rng(rng) -> tuple[np.random.Generator, int | None]:
    if isinstance(rng, np.random.Generator):
        return rng, None
    if rng is None:
        raise ValueError("run_chain needs a seed or a Generator")
    return np.random.default_rng(int(rng)), int(rng)


def run_chain(
    spec: Target,
    iters: int = DEFAULT_ITERS,
    burn: int = DEFAULT_BURN,
    thin: int = DEFAULT_THIN,
    target_accept: float = 0.25,
    rng=None,
    step0: float = 0.2,
    z0: np.ndarray | None = None,
    functional: np.ndarray | None = None,
    seed: int | None = None,
) -> ChainResult:
    """Adaptive pCN chain.

    During burn-in log(beta) follows a Robbins-Monro recursion with gain
    (k + 1)^-0.6 towards ``target_accept``; beta is frozen afterwards.
    ``functional`` (coefficient weights) is tracked for the ESS diagnostic.
    """
    if not iters > burn >= 0:
        raise ValueError(f"need iters > burn >= 0, got iters={iters}, burn={burn}")
    if thin < 1:
        raise ValueError("thin must be at least 1")
    if not 0.0 < target_accept < 1.0:
        raise ValueError("target_accept must lie in (0, 1)")
    gen, used_seed = _as_rng(rng)
    seed = used_seed if seed is None else seed

    state = initial_state(spec, step0, z0)
    log_beta = math.log(step0)
    J = spec.prior.size
    keep = np.empty(((iters - burn) // thin, J))
    kept = 0
    accepted = 0
    for k in range(iters):
        z_new, ll_new, prob = _pcn_propose(state, spec, gen)
        if gen.uniform() < prob:
            state = ChainState(z_new, ll_new, state.step, True)
            if k >= burn:
                accepted += 1
        if k < burn:
            log_beta = min(0.0, log_beta + (k + 1) ** -0.6 * (prob - target_accept))
            state = replace(state, step=max(math.exp(log_beta), 1e-8))
        elif (k - burn + 1) % thin == 0 and kept < keep.shape[0]:
            keep[kept] = state.z
            kept += 1
    draws = keep[:kept] * spec.prior.sd
    ess = chain_ess(draws, functional)
    return ChainResult(
        draws=draws,
        accept_rate=accepted / (iters - burn),
        ess_min=ess,
        seed=seed,
        beta_final=state.step,
        basis=spec.prior.basis,
        low_ess=bool(ess < ESS_WARN),
    )


# ---------------------------------------------------------------------------
# diagnostics


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalised autocorrelation of a 1-d series (FFT based)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    if acov[0] <= 0:
        return np.concatenate([[1.0], np.zeros(n - 1)])
    return acov / acov[0]


def effective_sample_size(x: np.ndarray) -> float:
    """ESS by Geyer's initial monotone sequence estimator."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 4:
        return float(n)
    if np.ptp(x) == 0:
        return float(n)
    rho = autocorrelation(x)
    m = (n - 1) // 2
    pairs = rho[0 : 2 * m : 2] + rho[1 : 2 * m + 1 : 2]
    # initial positive sequence
    neg = np.nonzero(pairs <= 0)[0]
    pairs = pairs[: neg[0]] if neg.size else pairs
    # initial monotone sequence
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / math.log10(max(n, 10)))
    return float(min(n / tau, n * math.log10(max(n, 10))))


def chain_ess(draws: np.ndarray, functional: np.ndarray | None = None) -> float:
    """Minimum ESS over the first coefficients and the tracked functional."""
    cols = [draws[:, i] for i in range(min(ESS_TRACKED, draws.shape[1]))]
    if functional is not None:
        f = np.zeros(draws.shape[1])
        phi = np.asarray(functional, dtype=float)[: draws.shape[1]]
        f[: phi.size] = phi
        cols.append(draws @ f)
    return min(effective_sample_size(c) for c in cols)


def posterior_mean(chain: ChainResult) -> FunctionCoefficients:
    return FunctionCoefficients(chain.basis, chain.draws.mean(axis=0))


# ---------------------------------------------------------------------------
# exact Gaussian posterior (npiv)


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray = field(repr=False)
    basis: SieveBasisSpec

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def mean_function(self) -> FunctionCoefficients:
        return FunctionCoefficients(self.basis, self.mean)


def quadratic_form(spec: QuasiPosteriorSpec) -> tuple[float, np.ndarray, np.ndarray]:
    """(c, b, A) with Q_n(theta) = c - 2 b'theta + theta' A theta (npiv only).

    m_hat at the data is affine in theta; its intercept and slopes are found
    by pushing theta = 0 and the unit vectors through the first stage.
    """
    if spec.model.kind != "npiv":
        raise ValueError("the quasi-posterior is Gaussian only for the npiv residual")
    obj = spec.objective
    if obj.mode == "cu":
        raise ValueError("the continuously-updated posterior is not Gaussian")
    fit = obj.fit
    Y = fit.data.Y
    bx = design_matrix(spec.prior.basis, fit.data.X)
    m0 = fit.project(spec.model.residuals(Y, np.zeros_like(Y)))[:, 0]
    # each column: m_hat(theta = e_i) - m_hat(0)
    slopes = np.column_stack(
        [fit.project(spec.model.residuals(Y, bx[:, i]))[:, 0] - m0 for i in range(bx.shape[1])]
    )
    sig = obj.data_weights(spec.model)
    wts = np.ones(fit.n) if sig is None else sig[:, 0, 0]
    n = fit.n
    c = float(np.mean(wts * m0**2))
    b = -(slopes.T @ (wts * m0)) / n
    A = slopes.T @ (wts[:, None] * slopes) / n
    return c, b, 0.5 * (A + A.T)


def exact_gaussian_posterior(spec: QuasiPosteriorSpec, n_weight: float | None = None) -> GaussianPosterior:
    """Mean (nA + L^-1)^-1 n b and covariance (nA + L^-1)^-1.

    ``n_weight`` replaces the likelihood multiplier n (0 gives the prior).
    """
    _, b, A = quadratic_form(spec)
    n = spec.n if n_weight is None else n_weight
    precision = n * A + np.diag(1.0 / spec.prior.variances)
    factor = cho_factor(precision)
    cov = cho_solve(factor, np.eye(precision.shape[0]))
    mean = cho_solve(factor, n * b)
    return GaussianPosterior(mean, 0.5 * (cov + cov.T), spec.prior.basis)
