"""End-to-end fitting: first stage, prior, weights and the quasi-posterior."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qbcmr.basis import SieveBasisSpec
from qbcmr.models import Dataset, MomentModel, VariancePilot, WeightFunction, constant_pilot, fit_variance_pilot
from qbcmr.posterior import (
    DEFAULT_BURN,
    DEFAULT_ITERS,
    DEFAULT_THIN,
    ChainResult,
    QuasiPosteriorSpec,
    exact_gaussian_posterior,
    run_chain,
)
from qbcmr.prior import WeakNormWeights, scaled_prior, truncation_level
from qbcmr.sieve import ObjectiveSpec, first_stage_fit, select_K

WEIGHTING = ("identity", "optimal", "cu")


@dataclass(frozen=True)
class ChainSettings:
    iters: int = DEFAULT_ITERS
    burn: int = DEFAULT_BURN
    thin: int = DEFAULT_THIN
    target_accept: float = 0.25

    def __post_init__(self):
        if not self.iters > self.burn >= 0 or self.thin < 1:
            raise ValueError("chain settings need iters > burn >= 0 and thin >= 1")


def resolve_K(K, n: int, alpha: float, ill_posedness: WeakNormWeights, d: int = 1) -> int:
    if K is None or K == "auto":
        return select_K(n, alpha, ill_posedness, d)
    K = int(K)
    if K < 1:
        raise ValueError("K must be positive")
    return K


def npiv_pilot(data: Dataset, basisW: SieveBasisSpec, alpha: float) -> VariancePilot:
    """E[rho^2 | W] fitted to residuals of the identity-weight posterior mean."""
    model = MomentModel("npiv")
    spec = build_posterior(data, model, alpha, basisW.size, WeightFunction())
    h = exact_gaussian_posterior(spec).mean_function()
    rho = model.residuals(data.Y, h(data.X))
    return fit_variance_pilot(data.W, rho, basisW)


def make_weights(mode: str, model: MomentModel, data: Dataset, basisW: SieveBasisSpec, alpha: float):
    """WeightFunction and objective mode for a named weighting scheme."""
    if mode == "identity":
        return WeightFunction(), "fixed"
    if mode == "optimal":
        if model.kind == "npqiv":
            g = model.gamma
            return WeightFunction("optimal", pilot=constant_pilot(g * (1.0 - g))), "fixed"
        return WeightFunction("optimal", pilot=npiv_pilot(data, basisW, alpha)), "fixed"
    if mode == "cu":
        return WeightFunction("cu", basis=basisW), "cu"
    raise ValueError(f"unknown weighting {mode!r}; expected one of {WEIGHTING}")


def build_posterior(
    data: Dataset,
    model: MomentModel,
    alpha: float,
    K: int,
    weights: WeightFunction,
    objective_mode: str = "fixed",
    J: int | None = None,
) -> QuasiPosteriorSpec:
    basisW = SieveBasisSpec("cosine", data.d_w, K)
    fit = first_stage_fit(data, basisW)
    J = truncation_level(K) if J is None else J
    prior = scaled_prior(alpha, J, K, data.n, SieveBasisSpec("cosine", data.d, J))
    return QuasiPosteriorSpec(ObjectiveSpec(fit, weights, objective_mode), model, prior)


@dataclass(frozen=True)
class FitResult:
    spec: QuasiPosteriorSpec
    chain: ChainResult | None
    K: int
    J: int
    weighting: str


def fit_quasi_bayes(
    data: Dataset,
    model: MomentModel,
    alpha: float,
    K: int,
    weighting: str = "identity",
    chain: ChainSettings | None = ChainSettings(),
    rng=None,
    functional: np.ndarray | None = None,
    J: int | None = None,
    seed: int | None = None,
) -> FitResult:
    """Build the quasi-posterior and (unless ``chain`` is None) sample it."""
    basisW = SieveBasisSpec("cosine", data.d_w, K)
    wf, mode = make_weights(weighting, model, data, basisW, alpha)
    spec = build_posterior(data, model, alpha, K, wf, mode, J)
    result = None
    if chain is not None:
        result = run_chain(
            spec,
            iters=chain.iters,
            burn=chain.burn,
            thin=chain.thin,
            target_accept=chain.target_accept,
            rng=rng,
            functional=functional,
            seed=seed,
        )
    return FitResult(spec, result, K, spec.prior.size, weighting)
