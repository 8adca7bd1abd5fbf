"""First-stage series projection, the quasi-Bayes objective and the K rule.

Notation: ``b(w)`` is the first-stage basis, ``G`` its reference Gram and
``bt(w) = G^{-1/2} b(w)`` the whitened basis.  With ``Gw`` the empirical Gram
of ``bt`` and ``R = E_n[bt(W) rho']`` (K x d_rho) the projection reads

    m_hat(w, h) = R' Gw^{-1} bt(w),

and with identity weighting ``E_n ||m_hat||^2 = sum_l R_l' Gw^{-1} R_l``, an
O(nK + K^2) evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from qbcmr.basis import (
    FunctionCoefficients,
    GramMatrices,
    SieveBasisSpec,
    design_matrix,
    gram_matrices,
    reference_gram,
)
from qbcmr.models import (
    Dataset,
    MomentModel,
    WeightFunction,
    fit_variance_pilot,
    inverse_clamped,
    weights_at,
)
from qbcmr.prior import WeakNormWeights


@dataclass(frozen=True, eq=False)
class FirstStageFit:
    """Cached first-stage quantities for one dataset and one W-basis."""

    basisW: SieveBasisSpec
    gram: GramMatrices
    whitened_design: np.ndarray = field(repr=False)
    data: Dataset = field(repr=False)
    factor: tuple = field(repr=False)

    @property
    def K(self) -> int:
        return self.basisW.size

    @property
    def n(self) -> int:
        return self.data.n

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Gw^{-1} rhs."""
        return cho_solve(self.factor, rhs)

    @cached_property
    def projector(self) -> np.ndarray:
        """n x K matrix P with m_hat at the data equal to P @ R."""
        return self.solve(self.whitened_design.T).T

    def moment_vector(self, rho: np.ndarray) -> np.ndarray:
        """R = E_n[bt(W) rho'] with shape (K, d_rho)."""
        rho = rho.reshape(self.n, -1)
        return self.whitened_design.T @ rho / self.n

    def project(self, values: np.ndarray) -> np.ndarray:
        """Least-squares projection of per-observation values onto the W-basis."""
        return self.projector @ self.moment_vector(values)


def first_stage_fit(data: Dataset, basisW: SieveBasisSpec) -> FirstStageFit:
    if data.n <= basisW.size:
        raise ValueError(f"need n > K, got n={data.n}, K={basisW.size}")
    if basisW.dim != data.d_w:
        raise ValueError(f"basis dimension {basisW.dim} does not match W dimension {data.d_w}")
    raw = design_matrix(basisW, data.W)
    ref = None if basisW.family == "cosine" else reference_gram(basisW)
    gram = gram_matrices(raw, ref)
    white = raw @ gram.G_inv_sqrt
    white.setflags(write=False)
    factor = cho_factor(gram.G_whitened)
    return FirstStageFit(basisW, gram, white, data, factor)


def _whitened_at(fit: FirstStageFit, w) -> np.ndarray:
    return design_matrix(fit.basisW, w) @ fit.gram.G_inv_sqrt


def mhat_from_residuals(fit: FirstStageFit, rho: np.ndarray, w) -> np.ndarray:
    coef = fit.solve(fit.moment_vector(rho))
    return _whitened_at(fit, w) @ coef


def mhat(fit: FirstStageFit, model: MomentModel, h: FunctionCoefficients, w) -> np.ndarray:
    """m_hat(w, h) at one point (vector of length d_rho)."""
    pt = np.atleast_1d(np.asarray(w, dtype=float)).reshape(1, -1)
    return mhat_at(fit, model, h, pt)[0]


def mhat_at(fit: FirstStageFit, model: MomentModel, h: FunctionCoefficients, w) -> np.ndarray:
    """m_hat at several points, shape (m, d_rho)."""
    rho = model.residuals(fit.data.Y, h(fit.data.X))
    return mhat_from_residuals(fit, rho, w)


def mhat_at_data(fit: FirstStageFit, model: MomentModel, h: FunctionCoefficients) -> np.ndarray:
    rho = model.residuals(fit.data.Y, h(fit.data.X))
    return fit.project(rho)


# ---------------------------------------------------------------------------
# objective

OBJECTIVE_MODES = ("fixed", "cu")


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    """Q_n(h) = E_n[m_hat(W, h)' Sigma(W) m_hat(W, h)].

    ``mode='cu'`` re-estimates Sigma at every h from the residuals
    (continuously-updated objective); ``weights`` must then be in ``cu`` mode.
    """

    fit: FirstStageFit
    weights: WeightFunction = field(default_factory=WeightFunction)
    mode: str = "fixed"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mode not in OBJECTIVE_MODES:
            raise ValueError(f"unknown objective mode {self.mode!r}")
        if (self.mode == "cu") != (self.weights.mode == "cu"):
            raise ValueError("continuously-updated objectives need cu weights and vice versa")

    def data_weights(self, model: MomentModel) -> np.ndarray | None:
        """Fixed weights at the data as (n, d, d), or None for the identity."""
        if self.mode == "cu":
            raise ValueError("weights depend on h in continuously-updated mode")
        key = (model.kind, model.gamma)
        if key not in self._cache:
            if self.weights.mode == "identity":
                val = None
            else:
                val = weights_at(self.weights, model, self.fit.data.W)
            self._cache[key] = val
        return self._cache[key]

    def cu_weights(self, model: MomentModel, rho: np.ndarray) -> np.ndarray:
        wf = self.weights
        if wf.variance_fn is not None:
            second = np.atleast_2d(wf.variance_fn(self.fit.data.W, rho))
            if second.shape[0] != self.fit.n:
                second = np.broadcast_to(second, (self.fit.n,) + second.shape[-2:])
            return inverse_clamped(second.reshape(self.fit.n, rho.shape[1], rho.shape[1]), wf.bounds)
        if wf.basis is None or wf.basis == self.fit.basisW:
            outer = np.einsum("ni,nj->nij", rho, rho).reshape(self.fit.n, -1)
            second = self.fit.project(outer).reshape(self.fit.n, rho.shape[1], rho.shape[1])
        else:
            second = fit_variance_pilot(self.fit.data.W, rho, wf.basis)(self.fit.data.W)
        return inverse_clamped(second, wf.bounds)


def objective_from_residuals(spec: ObjectiveSpec, model: MomentModel, rho: np.ndarray) -> float:
    """Q_n given the residual matrix (n, d_rho) at the data."""
    fit = spec.fit
    rho = rho.reshape(fit.n, -1)
    R = fit.moment_vector(rho)
    if spec.mode == "cu":
        sig = spec.cu_weights(model, rho)
    else:
        sig = spec.data_weights(model)
        if sig is None:
            return float(np.sum(R * fit.solve(R)))
    m = fit.projector @ R
    if m.shape[1] == 1:
        return float(np.mean(sig[:, 0, 0] * m[:, 0] ** 2))
    return float(np.mean(np.einsum("ni,nij,nj->n", m, sig, m)))


def quasi_objective(spec: ObjectiveSpec, model: MomentModel, h: FunctionCoefficients) -> float:
    rho = model.residuals(spec.fit.data.Y, h(spec.fit.data.X))
    return objective_from_residuals(spec, model, rho)


def direct_objective(spec: ObjectiveSpec, model: MomentModel, h: FunctionCoefficients) -> float:
    """Q_n by evaluating m_hat at every W_i (the slow reference path)."""
    fit = spec.fit
    m = mhat_at(fit, model, h, fit.data.W)
    if spec.mode == "cu":
        sig = weights_at(spec.weights, model, fit.data.W, h_opt=h, data=fit.data, cu_basis=fit.basisW)
    else:
        sig = weights_at(spec.weights, model, fit.data.W)
    return float(np.mean(np.einsum("ni,nij,nj->n", m, sig, m)))


# ---------------------------------------------------------------------------
# sieve dimension


def select_K(n: int, alpha: float, weights: WeakNormWeights, d: int = 1) -> int:
    """Largest K with sqrt(K / n) <= sigma_K K^(-alpha/d) (at least 1)."""
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    root_n = math.sqrt(n)
    best = 1
    K = 1
    while True:
        # small relative slack so exact ties (e.g. 4^2.5 = 32) are kept
        lhs = math.sqrt(K) / root_n
        try:
            sigma = float(weights.at(K))
        except IndexError:
            break
        rhs = sigma * K ** (-alpha / d)
        if lhs > rhs * (1.0 + 1e-12):
            break
        best = K
        K += 1
        if K > n:
            break
    return best
