"""Residual functions, synthetic data-generating processes and weighting.

Built-in designs
----------------
All designs are univariate (X, W in [0, 1]) and share one latent structure.
With Z1, Z2 iid N(0, 1) independent of W ~ U[0, 1], put

    psi = Z1 * sign(Z2) ~ N(0, 1),   S = s(|Z2|),   B = S * psi,
    X   = fold(W + B),

where ``fold`` reflects the real line onto [0, 1] (period-2 triangle wave).
Because B is symmetric and independent of W, X is again uniform and the
conditional-expectation operator h -> E[h(X) | W] is diagonal in the cosine
basis with eigenvalues equal to the characteristic function of B at pi*k:

* ``product-normal`` kernel, s(t) = b t:  B = b Z1 Z2,  (1 + (pi k b)^2)^(-1/2)
  (polynomial decay, mildly ill-posed with zeta = d = 1);
* ``cauchy`` kernel, s(t) = b / t:  B = b Z1 / Z2,  exp(-pi k b)
  (exponential decay, severely ill-posed with R = pi b, zeta = d = 1).

The structural error is built from xi = e psi + sqrt(1 - e^2) eps, which is
standard normal and independent of W, so the conditional moment restriction
holds exactly while X stays endogenous through psi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.stats import norm

from qbcmr.basis import (
    FunctionCoefficients,
    SieveBasisSpec,
    design_matrix,
    gauss_legendre,
    reference_gram,
)
from qbcmr.exceptions import ConfigError, QuadratureError
from qbcmr.prior import WeakNormWeights

# eigenvalue clamp applied to every weighting matrix
WEIGHT_BOUNDS = (1e-3, 1e3)


# ---------------------------------------------------------------------------
# residuals


@dataclass(frozen=True)
class MomentModel:
    """Generalised residual: ``npiv`` (Y - h) or ``npqiv`` (1{Y <= h} - gamma)."""

    kind: str = "npiv"
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in ("npiv", "npqiv"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "npqiv":
            if self.gamma is None or not 0.0 < self.gamma < 1.0:
                raise ValueError(f"npqiv needs a quantile level in (0, 1), got {self.gamma}")
        elif self.gamma is not None:
            raise ValueError("gamma is only meaningful for npqiv")

    @property
    def d_rho(self) -> int:
        return 1

    @property
    def kappa(self) -> float:
        """Exponent of the L2 modulus of continuity of the residual."""
        return 1.0 if self.kind == "npiv" else 0.5

    @property
    def is_linear(self) -> bool:
        return self.kind == "npiv"

    def residuals(self, y, h_at_x) -> np.ndarray:
        """Vectorised residuals with shape (n, d_rho)."""
        y = np.asarray(y, dtype=float)
        hx = np.asarray(h_at_x, dtype=float)
        if self.kind == "npiv":
            r = y - hx
        else:
            r = (y - hx <= 0.0).astype(float) - self.gamma
        return r.reshape(-1, 1)


def residual(model: MomentModel, y: float, h_at_x: float) -> np.ndarray:
    """rho(y, h(x)) as a vector of length d_rho."""
    return model.residuals(np.atleast_1d(y), np.atleast_1d(h_at_x))[0]


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        W = np.asarray(self.W, dtype=float)
        Y = np.asarray(self.Y, dtype=float).reshape(-1)
        X = X.reshape(-1, 1) if X.ndim == 1 else X
        W = W.reshape(-1, 1) if W.ndim == 1 else W
        if not X.shape[0] == W.shape[0] == Y.shape[0]:
            raise ValueError("X, Y and W must have the same number of rows")
        for name, arr in (("X", X), ("W", W)):
            if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
                raise ValueError(f"{name} must lie in the unit cube")
        for name, arr in (("X", X), ("Y", Y), ("W", W)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def d_w(self) -> int:
        return self.W.shape[1]


# ---------------------------------------------------------------------------
# designs


def fold(y: np.ndarray) -> np.ndarray:
    """Reflect the real line onto [0, 1] (even, 2-periodic triangle wave)."""
    r = np.mod(y, 2.0)
    return np.where(r > 1.0, 2.0 - r, r)


def default_h0(alpha: float, d: int = 1, terms: int = 32, amplitude: float = 1.0) -> FunctionCoefficients:
    """Truth with Sobolev regularity just above p = alpha + d/2.

    Coefficients are amplitude * (-1)^(i+1) * i^-(p/d + 1/2 + 0.01).
    """
    p = alpha + d / 2.0
    i = np.arange(1, terms + 1, dtype=float)
    c = amplitude * (-1.0) ** (i + 1) * i ** -(p / d + 0.5 + 0.01)
    return FunctionCoefficients(SieveBasisSpec("cosine", d, terms), c)


KERNELS = ("product-normal", "cauchy")


@dataclass(frozen=True)
class DgpDesign:
    """Synthetic NPIV / NPQIV design with a known truth and known operator."""

    h0: FunctionCoefficients
    endogeneity: float
    strength: float
    noise_sd: float
    model: MomentModel
    kernel: str = "product-normal"
    hetero: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        if self.h0.basis.family != "cosine" or self.h0.basis.dim != 1:
            raise ValueError("built-in designs need h0 on the univariate cosine basis")
        if not -1.0 <= self.endogeneity <= 1.0:
            raise ValueError("endogeneity must lie in [-1, 1]")
        if self.model.kind == "npqiv" and abs(self.endogeneity) >= 1.0:
            raise ValueError("npqiv designs need |endogeneity| < 1")
        if not 0.0 < self.strength <= 1.0:
            raise ValueError("strength must lie in (0, 1]")
        if self.noise_sd < 0 or (self.model.kind == "npqiv" and self.noise_sd == 0):
            raise ValueError("noise_sd must be positive")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; expected one of {KERNELS}")
        if not 0.0 <= self.hetero < 1.0:
            raise ValueError("hetero must lie in [0, 1)")

    @property
    def kernel_scale(self) -> float:
        """Scale b of the first-stage disturbance; strength 1 means X = W."""
        return (1.0 - self.strength) / self.strength

    @property
    def quantile_shift(self) -> float:
        return float(norm.ppf(self.model.gamma)) if self.model.kind == "npqiv" else 0.0

    def noise_scale(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float).reshape(-1)
        return self.noise_sd * (1.0 + self.hetero * (2.0 * w - 1.0))

    def residual_variance(self, w) -> np.ndarray:
        """E[rho(Y, h0(X))^2 | W = w]."""
        w = np.asarray(w, dtype=float).reshape(-1)
        if self.model.kind == "npiv":
            return self.noise_scale(w) ** 2
        g = self.model.gamma
        return np.full(w.shape, g * (1.0 - g))

    def latent_scale(self, t):
        b = self.kernel_scale
        if self.kernel == "product-normal":
            return b * t
        return b / t

    def char_fn(self, t):
        """E[cos(t B)] in closed form."""
        b = self.kernel_scale
        t = np.abs(np.asarray(t, dtype=float))
        if self.kernel == "product-normal":
            return 1.0 / np.sqrt(1.0 + (b * t) ** 2)
        return np.exp(-b * t)

    @property
    def ill_posedness(self) -> WeakNormWeights:
        """Shrinkage sequence of the linearised operator (taken as known)."""
        if self.kernel == "product-normal":
            return WeakNormWeights.mild(zeta=1.0, d=1)
        return WeakNormWeights.severe(R=math.pi * self.kernel_scale, zeta=1.0, d=1)

    @property
    def label(self) -> str:
        return "mild" if self.kernel == "product-normal" else "severe"

    def with_params(self, **changes) -> "DgpDesign":
        return replace(self, **changes)


def simulate_dgp(design: DgpDesign, n: int, rng: np.random.Generator) -> Dataset:
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    w = rng.uniform(0.0, 1.0, n)
    z1 = rng.standard_normal(n)
    z2 = rng.standard_normal(n)
    eps = rng.standard_normal(n)
    psi = z1 * np.where(z2 >= 0.0, 1.0, -1.0)
    t = np.abs(z2)
    if design.kernel == "cauchy":
        t = np.maximum(t, 1e-300)
    b = design.latent_scale(t) * psi
    x = fold(w + b)
    e = design.endogeneity
    xi = e * psi + math.sqrt(max(1.0 - e * e, 0.0)) * eps
    u = design.noise_scale(w) * (xi - design.quantile_shift)
    y = design.h0(x) + u
    return Dataset(x, y, w)


# ---------------------------------------------------------------------------
# catalog

DESIGN_DEFAULTS = {
    "npiv-mild": dict(kind="npiv", kernel="product-normal", hetero=0.0),
    "npiv-mild-hetero": dict(kind="npiv", kernel="product-normal", hetero=0.5),
    "npiv-severe": dict(kind="npiv", kernel="cauchy", hetero=0.0),
    "npqiv-mild": dict(kind="npqiv", kernel="product-normal", hetero=0.0, gamma=0.5),
}
DESIGN_PARAMS = ("strength", "endogeneity", "noise_sd", "hetero", "gamma", "amplitude", "terms")


def make_design(name: str, alpha: float = 1.0, **overrides) -> DgpDesign:
    """Look up a shipped design by name; ``overrides`` replace its parameters."""
    if name not in DESIGN_DEFAULTS:
        raise ConfigError(f"unknown design {name!r}; available: {sorted(DESIGN_DEFAULTS)}")
    unknown = set(overrides) - set(DESIGN_PARAMS)
    if unknown:
        raise ConfigError(f"unknown design parameter(s) {sorted(unknown)}")
    spec = dict(DESIGN_DEFAULTS[name])
    params = dict(strength=0.8, endogeneity=0.5, noise_sd=0.25, amplitude=1.0, terms=32)
    params.update(hetero=spec["hetero"], gamma=spec.get("gamma"))
    params.update(overrides)
    model = MomentModel(spec["kind"], params["gamma"] if spec["kind"] == "npqiv" else None)
    return DgpDesign(
        h0=default_h0(alpha, 1, int(params["terms"]), params["amplitude"]),
        endogeneity=params["endogeneity"],
        strength=params["strength"],
        noise_sd=params["noise_sd"],
        model=model,
        kernel=spec["kernel"],
        hetero=params["hetero"],
        name=name,
    )


# ---------------------------------------------------------------------------
# weighting


@dataclass(frozen=True)
class VariancePilot:
    """Series estimate of E[rho rho' | W = w] (or a known constant)."""

    coef: np.ndarray
    basis: SieveBasisSpec | None = None

    def __call__(self, w) -> np.ndarray:
        if self.basis is None:
            w = np.asarray(w, dtype=float)
            n = 1 if w.ndim == 0 else w.reshape(w.shape[0], -1).shape[0]
            return np.broadcast_to(self.coef, (n,) + self.coef.shape).copy()
        b = design_matrix(self.basis, w)
        return np.einsum("nk,kij->nij", b, self.coef)


def constant_pilot(sigma2) -> VariancePilot:
    m = np.atleast_2d(np.asarray(sigma2, dtype=float))
    return VariancePilot(m)


def fit_variance_pilot(W, residuals, basis: SieveBasisSpec) -> VariancePilot:
    """Least-squares projection of rho rho' on the first-stage basis."""
    r = np.asarray(residuals, dtype=float)
    r = r.reshape(-1, 1) if r.ndim == 1 else r
    b = design_matrix(basis, W)
    outer = np.einsum("ni,nj->nij", r, r).reshape(r.shape[0], -1)
    coef, *_ = np.linalg.lstsq(b, outer, rcond=None)
    return VariancePilot(coef.reshape(basis.size, r.shape[1], r.shape[1]), basis)


def clamp_spd(m: np.ndarray, bounds=WEIGHT_BOUNDS) -> np.ndarray:
    """Clamp the eigenvalues of a stack of symmetric matrices (..., d, d)."""
    m = np.asarray(m, dtype=float)
    if m.shape[-1] == 1:
        return np.clip(m, *bounds)
    vals, vecs = np.linalg.eigh(0.5 * (m + np.swapaxes(m, -1, -2)))
    vals = np.clip(vals, *bounds)
    return np.einsum("...ik,...k,...jk->...ij", vecs, vals, vecs)


def inverse_clamped(second_moment: np.ndarray, bounds=WEIGHT_BOUNDS) -> np.ndarray:
    """Inverse of a stack of conditional second moments, eigenvalues clamped.

    Clamping before inverting maps non-positive eigenvalues to the upper bound.
    """
    m = np.asarray(second_moment, dtype=float)
    lo, hi = 1.0 / bounds[1], 1.0 / bounds[0]
    if m.shape[-1] == 1:
        return 1.0 / np.clip(m, lo, hi)
    vals, vecs = np.linalg.eigh(0.5 * (m + np.swapaxes(m, -1, -2)))
    inv = 1.0 / np.clip(vals, lo, hi)
    return np.einsum("...ik,...k,...jk->...ij", vecs, inv, vecs)


WEIGHT_MODES = ("identity", "fixed", "optimal", "cu")


@dataclass(frozen=True)
class WeightFunction:
    """Weighting matrix Sigma(w) (or Sigma(w, h) in continuously-updated mode).

    fixed:    ``matrix_fn(w)`` returns an (n, d, d) stack or (n,) scalars.
    optimal:  inverse residual variance at the truth; NPIV needs a ``pilot``.
    cu:       inverse of the series estimate of E[rho rho' | W] at the current
              h, fitted on ``basis`` (defaults to the first-stage basis).
              ``variance_fn(W, rho)``, when given, replaces that estimate.
    """

    mode: str = "identity"
    matrix_fn: Callable | None = None
    pilot: VariancePilot | None = None
    basis: SieveBasisSpec | None = None
    variance_fn: Callable | None = None
    bounds: tuple[float, float] = WEIGHT_BOUNDS

    def __post_init__(self):
        if self.mode not in WEIGHT_MODES:
            raise ValueError(f"unknown weight mode {self.mode!r}; expected one of {WEIGHT_MODES}")
        if self.mode == "fixed" and self.matrix_fn is None:
            raise ValueError("fixed mode needs matrix_fn")

    @property
    def depends_on_h(self) -> bool:
        return self.mode == "cu"


def _as_stack(values, n: int, d: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim <= 1:
        v = np.broadcast_to(v.reshape(-1, 1, 1), (n, d, d)) if d == 1 else v
    return np.array(np.broadcast_to(v, (n, d, d)))


def weights_at(
    wf: WeightFunction,
    model: MomentModel,
    w,
    h_opt: FunctionCoefficients | None = None,
    pilot: VariancePilot | None = None,
    data: Dataset | None = None,
    cu_basis: SieveBasisSpec | None = None,
) -> np.ndarray:
    """Weighting matrices at several points, shape (n, d_rho, d_rho)."""
    w = np.asarray(w, dtype=float)
    w = w.reshape(-1, 1) if w.ndim <= 1 else w
    n, d = w.shape[0], model.d_rho
    if wf.mode == "identity":
        return np.broadcast_to(np.eye(d), (n, d, d)).copy()
    if wf.mode == "fixed":
        return clamp_spd(_as_stack(wf.matrix_fn(w), n, d), wf.bounds)
    if wf.mode == "optimal":
        if model.kind == "npqiv":
            g = model.gamma
            return np.full((n, d, d), float(np.clip(1.0 / (g * (1.0 - g)), *wf.bounds)))
        pilot = pilot if pilot is not None else wf.pilot
        if pilot is None:
            raise ValueError("optimal weighting for npiv needs a fitted variance pilot")
        return inverse_clamped(pilot(w), wf.bounds)
    # continuously updated
    if h_opt is None:
        raise ValueError("continuously-updated weighting needs the current h")
    if data is None:
        raise ValueError("continuously-updated weighting needs the data to estimate E[rho rho' | W]")
    rho = model.residuals(data.Y, h_opt(data.X))
    if wf.variance_fn is not None:
        est = VariancePilot(np.atleast_2d(wf.variance_fn(data.W, rho)))
        return inverse_clamped(est(w), wf.bounds)
    basis = wf.basis or cu_basis
    if basis is None:
        raise ValueError("continuously-updated weighting needs a basis for E[rho rho' | W]")
    return inverse_clamped(fit_variance_pilot(data.W, rho, basis)(w), wf.bounds)


def weight_at(wf, model, w, h_opt=None, pilot=None, data=None, cu_basis=None) -> np.ndarray:
    """The d_rho x d_rho weighting matrix at a single instrument value."""
    pt = np.atleast_1d(np.asarray(w, dtype=float)).reshape(1, -1)
    return weights_at(wf, model, pt, h_opt, pilot, data, cu_basis)[0]


# ---------------------------------------------------------------------------
# linearised operator


_T_MAX = 12.0  # 2 * phi(12) is far below double precision


def _half_normal_expectation(g: Callable[[float], float], scale_hint: float) -> float:
    """E[g(|Z|)] for Z ~ N(0, 1) by adaptive quadrature."""
    dens = lambda t: 2.0 * norm.pdf(t) * g(t)  # noqa: E731
    pts = [p for p in (scale_hint, 5.0 * scale_hint) if 0.0 < p < _T_MAX]
    val, err = integrate.quad(dens, 0.0, _T_MAX, points=pts or None, limit=400, epsabs=1e-13, epsrel=1e-11)
    if err > 1e-9:
        raise QuadratureError(f"latent quadrature error estimate {err:.2e} too large")
    return val


def operator_moments(design: DgpDesign, k: int) -> tuple[float, float]:
    """Latent-space factors (C_k, S_k) of the derivative applied to cos(pi k x).

    D[cos(pi k .)](w) = delta(w) * (cos(pi k w) C_k - sin(pi k w) S_k), where
    delta(w) = -1 for npiv and 1 / sigma(w) for npqiv.
    """
    if design.model.kind == "npiv":
        if k == 0:
            return 1.0, 0.0
        decay = lambda t: math.exp(-0.5 * (math.pi * k * design.latent_scale(t)) ** 2)  # noqa: E731
        return _half_normal_expectation(_guard(decay, design), _hint(design, k, 1.0)), 0.0
    q = design.quantile_shift
    e = design.endogeneity
    dens_q = float(norm.pdf(q))
    if k == 0:
        return dens_q, 0.0
    c2 = 1.0 - e * e

    def part(trig):
        def g(t):
            s = design.latent_scale(t)
            om = math.pi * k * s
            return math.exp(-0.5 * om * om * c2) * trig(om * e * q)

        return _half_normal_expectation(_guard(g, design), _hint(design, k, c2))

    return dens_q * part(math.cos), dens_q * part(math.sin)


def _guard(g, design):
    if design.kernel == "cauchy":
        return lambda t: 0.0 if t <= 0.0 else g(t)
    return g


def _hint(design: DgpDesign, k: int, c2: float) -> float:
    b = design.kernel_scale
    if b == 0.0:
        return 0.0
    width = math.pi * k * b * math.sqrt(max(c2, 1e-300))
    return 1.0 / width if design.kernel == "product-normal" else width


def operator_values(design: DgpDesign, J: int, w) -> np.ndarray:
    """(J, n_w) array of D_{h0}[e_i](w) for the first J cosine functions."""
    w = np.asarray(w, dtype=float).reshape(-1)
    moments = np.array([operator_moments(design, k) for k in range(J)])
    k = np.arange(J)
    ang = np.pi * np.outer(k, w)
    vals = np.cos(ang) * moments[:, :1] - np.sin(ang) * moments[:, 1:]
    vals[1:] *= math.sqrt(2.0)
    if design.model.kind == "npiv":
        return -vals
    return vals / design.noise_scale(w)[None, :]


def _w_rule(basisW: SieveBasisSpec, n: int) -> tuple[np.ndarray, np.ndarray]:
    panels = 1 if basisW.family == "cosine" else max(1, basisW.per_axis - 3)
    edges = np.linspace(0.0, 1.0, panels + 1)
    xs, ws = zip(*(gauss_legendre(n, lo, hi) for lo, hi in zip(edges[:-1], edges[1:])))
    return np.concatenate(xs), np.concatenate(ws)


@dataclass(frozen=True)
class FrechetOperator:
    """Matrix of <D_{h0}[e_i], b_j> (J x K) plus what is needed for adjoints."""

    matrix: np.ndarray
    basisX: SieveBasisSpec
    basisW: SieveBasisSpec
    design: DgpDesign = field(repr=False)

    def singular_values(self) -> np.ndarray:
        g = reference_gram(self.basisW)
        return np.linalg.svd(self.matrix @ np.linalg.cholesky(np.linalg.inv(g)), compute_uv=False)

    def weighted_gram(self, weight: str | Callable = "identity", n_nodes: int = 256) -> np.ndarray:
        """E[Sigma(W) b(W) b(W)'] for the limiting weight Sigma."""
        x, wt = _w_rule(self.basisW, n_nodes)
        b = design_matrix(self.basisW, x)
        sig = limiting_weight(self.design, weight, x)
        return b.T @ ((wt * sig)[:, None] * b)

    def adjoint_composition(self, weight: str | Callable = "identity") -> np.ndarray:
        """J x J matrix of <D e_i, D e_l> in the Sigma-weighted codomain."""
        ginv = np.linalg.inv(reference_gram(self.basisW))
        mid = ginv @ self.weighted_gram(weight) @ ginv
        out = self.matrix @ mid @ self.matrix.T
        return 0.5 * (out + out.T)


def limiting_weight(design: DgpDesign, weight: str | Callable, w) -> np.ndarray:
    """Scalar limiting weight Sigma(w) of the built-in univariate designs."""
    w = np.asarray(w, dtype=float).reshape(-1)
    if callable(weight):
        return np.clip(np.asarray(weight(w), dtype=float).reshape(-1), *WEIGHT_BOUNDS)
    if weight == "identity":
        return np.ones_like(w)
    if weight == "optimal":
        return np.clip(1.0 / design.residual_variance(w), *WEIGHT_BOUNDS)
    raise ValueError(f"unsupported limiting weight {weight!r}")


def frechet_operator_matrix(
    design: DgpDesign,
    basisX: SieveBasisSpec,
    basisW: SieveBasisSpec,
    n_nodes: int | None = None,
    tol: float = 1e-6,
) -> FrechetOperator:
    """Project the Frechet derivative of m(W, .) at h0 onto basisX x basisW.

    Entries are integrated with a Gauss-Legendre rule in w (the latent
    disturbance is integrated adaptively) and checked against a rule with
    twice as many nodes.
    """
    if basisX.family != "cosine" or basisX.dim != 1 or basisW.dim != 1:
        raise ValueError("operator matrices are available for univariate designs with a cosine X-basis")
    J, K = basisX.size, basisW.size
    n1 = n_nodes or max(64, 2 * (J + K) + 16)
    moments_cache = {}

    def project(n):
        x, wt = _w_rule(basisW, n)
        key = "vals"
        if key not in moments_cache:
            moments_cache[key] = np.array([operator_moments(design, k) for k in range(J)])
        mom = moments_cache[key]
        ang = np.pi * np.outer(np.arange(J), x)
        vals = np.cos(ang) * mom[:, :1] - np.sin(ang) * mom[:, 1:]
        vals[1:] *= math.sqrt(2.0)
        vals = -vals if design.model.kind == "npiv" else vals / design.noise_scale(x)[None, :]
        return vals @ (wt[:, None] * design_matrix(basisW, x))

    coarse = project(n1)
    fine = project(2 * n1)
    gap = float(np.max(np.abs(fine - coarse)))
    if gap > tol:
        raise QuadratureError(f"operator quadrature did not converge (refinement gap {gap:.2e})")
    return FrechetOperator(fine, basisX, basisW, design)


def classify_decay(singular_values: np.ndarray, rel_floor: float = 1e-12) -> str:
    """'mild' if log s_i is better fit linearly in log i, 'severe' if in i."""
    s = np.asarray(singular_values, dtype=float)
    s = s[s > rel_floor * s[0]]
    i = np.arange(1, s.size + 1, dtype=float)
    logs = np.log(s)

    def rss(x):
        a = np.vstack([np.ones_like(x), x]).T
        coef, *_ = np.linalg.lstsq(a, logs, rcond=None)
        return float(np.sum((logs - a @ coef) ** 2))

    return "mild" if rss(np.log(i)) < rss(i) else "severe"
