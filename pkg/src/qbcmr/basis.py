"""Orthonormal series bases on the unit cube and their Gram matrices.

Two families are available:

* ``cosine`` -- the Neumann cosine basis ``1, sqrt(2) cos(pi k x), k >= 1``.
  It is orthonormal in ``L2[0, 1]`` so the population Gram matrix under a
  uniform design is the identity.
* ``bspline`` -- clamped cubic B-splines on uniform knots.  Not orthonormal;
  the reference Gram is computed by exact Gauss-Legendre quadrature.

In ``d > 1`` dimensions both families are tensor products.  Multi-indices
(zero-based per coordinate) are listed by increasing total order, ties
broken lexicographically, and the first ``size`` are kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np
from scipy.interpolate import BSpline
from scipy.special import roots_legendre

from qbcmr.exceptions import SingularDesignError

FAMILIES = ("cosine", "bspline")

# eigenvalue floor for symmetric square roots
EIG_FLOOR = 1e-12
# empirical Gram condition numbers above this are rejected
COND_CEILING = 1e10


@dataclass(frozen=True)
class SieveBasisSpec:
    """Basis family, input dimension and number of retained functions."""

    family: str = "cosine"
    dim: int = 1
    size: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown basis family {self.family!r}; expected one of {FAMILIES}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if int(self.size) != self.size or self.size < 1:
            raise ValueError(f"size must be a positive integer, got {self.size}")

    @cached_property
    def multi_indices(self) -> np.ndarray:
        """(size, dim) array of zero-based per-coordinate indices."""
        return tensor_enumeration(self.dim, self.size)

    @cached_property
    def per_axis(self) -> int:
        """Number of univariate functions needed along each coordinate."""
        return int(self.multi_indices.max()) + 1

    def resized(self, size: int) -> "SieveBasisSpec":
        return SieveBasisSpec(self.family, self.dim, size)


def tensor_enumeration(dim: int, size: int) -> np.ndarray:
    """First ``size`` multi-indices in ``N_0^dim`` by (total order, lexicographic)."""
    if dim == 1:
        return np.arange(size).reshape(-1, 1)
    out: list[tuple[int, ...]] = []
    total = 0
    while len(out) < size:
        # every index with |k| = total has max entry <= total
        shell = [k for k in product(range(total + 1), repeat=dim) if sum(k) == total]
        out.extend(sorted(shell))
        total += 1
    return np.array(out[:size], dtype=int)


# ---------------------------------------------------------------------------
# univariate evaluation


def _cosine_1d(x: np.ndarray, m: int) -> np.ndarray:
    """Columns k = 0..m-1 of the cosine basis at points x (shape (n,))."""
    k = np.arange(m)
    out = np.sqrt(2.0) * np.cos(np.pi * np.outer(x, k))
    out[:, 0] = 1.0
    return out


def _bspline_knots(m: int) -> tuple[np.ndarray, int]:
    degree = min(3, m - 1)
    n_inner = m - degree - 1
    inner = np.linspace(0.0, 1.0, n_inner + 2)[1:-1]
    knots = np.concatenate([np.zeros(degree + 1), inner, np.ones(degree + 1)])
    return knots, degree


def _bspline_1d(x: np.ndarray, m: int) -> np.ndarray:
    knots, degree = _bspline_knots(m)
    if degree == 0:
        return np.ones((x.shape[0], 1))
    return BSpline.design_matrix(x, knots, degree).toarray()


def _univariate(family: str, x: np.ndarray, m: int) -> np.ndarray:
    if family == "cosine":
        return _cosine_1d(x, m)
    return _bspline_1d(x, m)


def _as_points(points, dim: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if dim == 1 and pts.ndim <= 1:
        pts = pts.reshape(-1, 1)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ValueError(f"points must have shape (n, {dim}), got {np.shape(points)}")
    if pts.shape[0] == 0:
        raise ValueError("empty point set")
    if not np.all(np.isfinite(pts)) or pts.min() < 0.0 or pts.max() > 1.0:
        raise ValueError("points must lie in the unit cube [0, 1]^d")
    return pts


def design_matrix(spec: SieveBasisSpec, points) -> np.ndarray:
    """Matrix with entry (j, i) equal to e_i(points_j)."""
    pts = _as_points(points, spec.dim)
    m = spec.per_axis
    idx = spec.multi_indices
    out = np.ones((pts.shape[0], spec.size))
    for axis in range(spec.dim):
        uni = _univariate(spec.family, pts[:, axis], m)
        out *= uni[:, idx[:, axis]]
    return out


def eval_basis(spec: SieveBasisSpec, i: int, x) -> float:
    """Value of the i-th (one-based) basis function at a single point."""
    if int(i) != i or not 1 <= i <= spec.size:
        raise IndexError(f"basis index {i} outside 1..{spec.size}")
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if pt.shape != (spec.dim,):
        raise ValueError(f"x must have {spec.dim} coordinates")
    if not np.all(np.isfinite(pt)) or pt.min() < 0.0 or pt.max() > 1.0:
        raise ValueError(f"x={x!r} outside the unit cube")
    ks = spec.multi_indices[i - 1]
    if spec.family == "cosine":
        val = 1.0
        for k, xc in zip(ks, pt):
            val *= 1.0 if k == 0 else math.sqrt(2.0) * math.cos(math.pi * k * xc)
        return val
    val = 1.0
    for k, xc in zip(ks, pt):
        val *= _bspline_1d(np.array([xc]), spec.per_axis)[0, k]
    return float(val)


# ---------------------------------------------------------------------------
# functions as coefficient sequences


@dataclass(frozen=True)
class FunctionCoefficients:
    """A function h = sum_i coeffs[i] e_i on a fixed basis."""

    basis: SieveBasisSpec
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.shape[0] != self.basis.size:
            raise ValueError(f"expected {self.basis.size} coefficients, got {c.shape[0]}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, basis: SieveBasisSpec) -> "FunctionCoefficients":
        return cls(basis, np.zeros(basis.size))

    @classmethod
    def unit(cls, basis: SieveBasisSpec, i: int) -> "FunctionCoefficients":
        c = np.zeros(basis.size)
        c[i - 1] = 1.0
        return cls(basis, c)

    def __call__(self, points) -> np.ndarray:
        return design_matrix(self.basis, points) @ self.coeffs

    def __add__(self, other: "FunctionCoefficients") -> "FunctionCoefficients":
        if other.basis != self.basis:
            raise ValueError("basis mismatch")
        return FunctionCoefficients(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other: "FunctionCoefficients") -> "FunctionCoefficients":
        return self + (-1.0) * other

    def __rmul__(self, a: float) -> "FunctionCoefficients":
        return FunctionCoefficients(self.basis, a * self.coeffs)

    def padded(self, size: int) -> "FunctionCoefficients":
        """Same function on a larger (or equal) truncation of the basis."""
        if size < self.basis.size:
            raise ValueError("cannot pad to a smaller basis")
        c = np.zeros(size)
        c[: self.basis.size] = self.coeffs
        return FunctionCoefficients(self.basis.resized(size), c)

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


def eval_function(h: FunctionCoefficients, x) -> float | np.ndarray:
    """h(x).  A single point gives a float, an (n, d) array gives a vector."""
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 0 or (pts.ndim == 1 and h.basis.dim > 1)
    vals = h(pts.reshape(1, -1) if single else pts)
    return float(vals[0]) if single else vals


# ---------------------------------------------------------------------------
# Gram matrices


@dataclass(frozen=True)
class GramMatrices:
    """Reference Gram G, empirical Gram G_hat and whitened G^{-1/2} G_hat G^{-1/2}."""

    G: np.ndarray
    G_hat: np.ndarray
    G_whitened: np.ndarray
    cond: float
    G_inv_sqrt: np.ndarray = field(repr=False)


def sym_power(m: np.ndarray, power: float, floor: float = EIG_FLOOR) -> np.ndarray:
    """Symmetric matrix power via eigendecomposition with an eigenvalue floor."""
    vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
    vals = np.maximum(vals, floor)
    return (vecs * vals**power) @ vecs.T


def gauss_legendre(n: int, a: float = 0.0, b: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = roots_legendre(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def reference_gram(spec: SieveBasisSpec) -> np.ndarray:
    """Population Gram E[b b'] under the uniform density on [0, 1]^d."""
    if spec.family == "cosine":
        return np.eye(spec.size)
    m = spec.per_axis
    knots, degree = _bspline_knots(m)
    breaks = np.unique(knots)
    nodes, weights = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        x, w = gauss_legendre(degree + 1, lo, hi)
        nodes.append(x)
        weights.append(w)
    x = np.concatenate(nodes)
    w = np.concatenate(weights)
    uni = _univariate(spec.family, x, m)
    g1 = uni.T @ (w[:, None] * uni)
    idx = spec.multi_indices
    g = np.ones((spec.size, spec.size))
    for axis in range(spec.dim):
        g *= g1[np.ix_(idx[:, axis], idx[:, axis])]
    return g


def gram_matrices(design: np.ndarray, reference: np.ndarray | None = None) -> GramMatrices:
    """Empirical and whitened Gram matrices of an n x K design.

    ``reference`` defaults to the identity, which is the population Gram of
    the cosine basis under a uniform design density.
    """
    design = np.asarray(design, dtype=float)
    n, k = design.shape
    if n < k:
        raise ValueError(f"need n >= K, got n={n}, K={k}")
    ref = np.eye(k) if reference is None else np.asarray(reference, dtype=float)
    if ref.shape != (k, k) or not np.allclose(ref, ref.T):
        raise ValueError("reference must be a symmetric K x K matrix")
    if np.linalg.eigvalsh(ref).min() <= 0:
        raise ValueError("reference must be positive definite")
    g_hat = design.T @ design / n
    g_hat = 0.5 * (g_hat + g_hat.T)
    eig = np.linalg.eigvalsh(g_hat)
    cond = float(eig[-1] / eig[0]) if eig[0] > 0 else math.inf
    if not cond <= COND_CEILING:
        raise SingularDesignError(
            f"empirical Gram condition number {cond:.3g} exceeds {COND_CEILING:.0e}; "
            f"K={k} is too large for n={n} or the basis is degenerate"
        )
    inv_sqrt = sym_power(ref, -0.5)
    whitened = inv_sqrt @ g_hat @ inv_sqrt
    return GramMatrices(
        G=ref,
        G_hat=g_hat,
        G_whitened=0.5 * (whitened + whitened.T),
        cond=cond,
        G_inv_sqrt=inv_sqrt,
    )
