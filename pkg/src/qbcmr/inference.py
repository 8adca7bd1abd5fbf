"""Linear functionals, credible intervals, limiting variances and coverage."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from qbcmr.basis import FunctionCoefficients, SieveBasisSpec, design_matrix, gauss_legendre
from qbcmr.exceptions import InsufficientDrawsError, QuadratureError
from qbcmr.models import DgpDesign, frechet_operator_matrix, limiting_weight, operator_values, simulate_dgp
from qbcmr.pipeline import ChainSettings, fit_quasi_bayes, resolve_K
from qbcmr.posterior import ChainResult, posterior_mean
from qbcmr.replication import run_replications

MIN_DRAWS = 20
SOURCE_TOL = 1e-6


@dataclass(frozen=True)
class LinearFunctional:
    """L(h) = E[Phi(X) h(X)].

    ``density_gram`` (optional) holds E[e_i(X) e_j(X)] under a non-uniform
    X-density; without it the coefficient inner product is used.
    """

    phi: FunctionCoefficients
    phi_tilde: FunctionCoefficients | None = None
    density_gram: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def with_density(cls, phi: FunctionCoefficients, density: Callable, n_nodes: int = 200) -> "LinearFunctional":
        """Attach the Gram matrix of the basis under ``density`` on [0, 1]^d."""
        d = phi.basis.dim
        x1, w1 = gauss_legendre(n_nodes)
        grids = np.meshgrid(*([x1] * d), indexing="ij")
        pts = np.column_stack([g.reshape(-1) for g in grids])
        wts = np.prod(np.meshgrid(*([w1] * d), indexing="ij"), axis=0).reshape(-1)
        f = np.asarray(density(pts), dtype=float).reshape(-1)
        b = design_matrix(phi.basis, pts)
        return cls(phi, None, b.T @ ((wts * f)[:, None] * b))

    def coefficient_weights(self, size: int) -> np.ndarray:
        """Vector a with L(h) = a' coeffs(h) for h on ``size`` basis functions."""
        if self.density_gram is not None:
            if size > self.phi.basis.size:
                raise ValueError("density-weighted functionals need h on at most the representer basis")
            return (self.density_gram @ self.phi.coeffs)[:size]
        out = np.zeros(size)
        m = min(size, self.phi.basis.size)
        out[:m] = self.phi.coeffs[:m]
        return out


def _check_basis(a: SieveBasisSpec, b: SieveBasisSpec):
    if a.family != b.family or a.dim != b.dim:
        raise ValueError(f"basis mismatch: {a} vs {b}")


def functional_value(L: LinearFunctional, h: FunctionCoefficients) -> float:
    _check_basis(L.phi.basis, h.basis)
    return float(L.coefficient_weights(h.basis.size) @ h.coeffs)


def construct_functional_from_phitilde(
    design: DgpDesign,
    phi_tilde: FunctionCoefficients,
    weight: str | Callable = "optimal",
    size: int | None = None,
) -> LinearFunctional:
    """Phi = D* Sigma D phi_tilde, with the adjoint in the Sigma-weighted inner product.

    The result is checked against a direct w-quadrature of
    int D[e_i](w) Sigma(w) D[phi_tilde](w) dw.
    """
    J = max(size or 64, phi_tilde.basis.size)
    pt = phi_tilde.padded(J)
    basisX = SieveBasisSpec("cosine", 1, J)
    op = frechet_operator_matrix(design, basisX, SieveBasisSpec("cosine", 1, 2 * J))
    phi = op.adjoint_composition(weight) @ pt.coeffs
    # independent check
    x, wt = gauss_legendre(max(256, 4 * J))
    vals = operator_values(design, J, x)
    direct = vals @ (wt * limiting_weight(design, weight, x) * (pt.coeffs @ vals))
    gap = float(np.max(np.abs(phi - direct)))
    if gap > SOURCE_TOL:
        raise QuadratureError(f"representer does not satisfy the source condition (gap {gap:.2e})")
    return LinearFunctional(FunctionCoefficients(basisX, phi), pt)


@dataclass(frozen=True)
class CredibleInterval:
    center: float
    radius: float
    gamma: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be non-negative")

    @property
    def lower(self) -> float:
        return self.center - self.radius

    @property
    def upper(self) -> float:
        return self.center + self.radius

    def contains(self, value: float) -> bool:
        return bool(abs(value - self.center) <= self.radius)


def credible_interval(chain: ChainResult, L: LinearFunctional, gamma: float) -> CredibleInterval:
    """center = L(posterior mean), radius = (1 - gamma) quantile of |L(draw) - center|."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if chain.n_draws < MIN_DRAWS:
        raise InsufficientDrawsError(f"{chain.n_draws} retained draws; at least {MIN_DRAWS} are needed")
    _check_basis(L.phi.basis, chain.basis)
    a = L.coefficient_weights(chain.basis.size)
    center = float(a @ posterior_mean(chain).coeffs)
    dev = np.abs(chain.draws @ a - center)
    radius = float(np.quantile(dev, 1.0 - gamma, method="linear"))
    return CredibleInterval(center, radius, gamma)


@dataclass(frozen=True)
class LimitingVariances:
    """Posterior-spread and sampling variances of sqrt(n) L(h)."""

    spread: float
    sampling: float

    @property
    def relative_gap(self) -> float:
        scale = max(abs(self.spread), abs(self.sampling))
        return 0.0 if scale == 0 else abs(self.spread - self.sampling) / scale


def asymptotic_variance_oracle(
    design: DgpDesign,
    L: LinearFunctional,
    weight: str | Callable = "optimal",
    n_nodes: int = 256,
    rtol: float = 1e-10,
) -> LimitingVariances:
    """E[(D phi~)' Sigma (D phi~)] and E[(D phi~)' Sigma rho rho' Sigma (D phi~)].

    In optimal mode Sigma = 1 / E[rho^2 | W] and both collapse to the same
    number (unless the weight clamp binds).
    """
    if L.phi_tilde is None:
        raise ValueError("the variance oracle needs a functional built from phi_tilde")
    coef = L.phi_tilde.coeffs

    def integrals(m):
        x, wt = gauss_legendre(m)
        dphi = coef @ operator_values(design, coef.size, x)
        sig = limiting_weight(design, weight, x)
        v = design.residual_variance(x)
        return np.array([np.sum(wt * dphi**2 * sig), np.sum(wt * dphi**2 * sig**2 * v)])

    coarse, fine = integrals(n_nodes), integrals(2 * n_nodes)
    if np.any(np.abs(fine - coarse) > rtol * np.maximum(np.abs(fine), 1e-300)):
        raise QuadratureError("variance quadrature did not converge")
    return LimitingVariances(float(fine[0]), float(fine[1]))


# ---------------------------------------------------------------------------
# coverage


@dataclass(frozen=True)
class CoverageResult:
    coverage: float
    se: float
    records: list = field(repr=False)
    truth: float = math.nan

    @property
    def replications(self) -> int:
        return len(self.records)


def coverage_replication(index: int, seed: int, job: dict) -> dict:
    """One replication: simulate, fit, sample, form the interval."""
    design: DgpDesign = job["design"]
    L: LinearFunctional = job["functional"]
    rng = np.random.default_rng(seed)
    data = simulate_dgp(design, job["n"], rng)
    fit = fit_quasi_bayes(
        data,
        design.model,
        job["alpha"],
        job["K"],
        job["weighting"],
        chain=job["chain"],
        rng=rng,
        functional=L.phi.coeffs,
        seed=seed,
    )
    ci = credible_interval(fit.chain, L, job["gamma"])
    truth = job["truth"]
    return {
        "replication": index,
        "seed": seed,
        "truth": truth,
        "center": ci.center,
        "radius": ci.radius,
        "hit": ci.contains(truth),
        "accept_rate": fit.chain.accept_rate,
        "ess_min": fit.chain.ess_min,
        "low_ess": fit.chain.low_ess,
        "K": fit.K,
        "J": fit.J,
    }


def coverage_study(
    design: DgpDesign,
    functional: LinearFunctional,
    gamma: float,
    n: int,
    R: int,
    base_seed: int,
    alpha: float = 1.0,
    K="auto",
    weighting: str = "optimal",
    chain=None,
    workers: int = 1,
) -> CoverageResult:
    """Empirical coverage of the credible interval over R replications."""
    if R < 1:
        raise ValueError("need at least one replication")
    if functional.phi_tilde is None:
        warnings.warn("coverage guarantees need a representer built from phi_tilde", stacklevel=2)
    K = resolve_K(K, n, alpha, design.ill_posedness)
    truth = functional_value(functional, design.h0)
    job = dict(
        design=design,
        functional=functional,
        n=n,
        alpha=alpha,
        K=K,
        weighting=weighting,
        chain=chain or ChainSettings(),
        gamma=gamma,
        truth=truth,
    )
    records = run_replications(coverage_replication, job, R, base_seed, workers)
    hits = np.array([r["hit"] for r in records], dtype=float)
    p = float(hits.mean())
    return CoverageResult(p, math.sqrt(p * (1.0 - p) / R), records, truth)
