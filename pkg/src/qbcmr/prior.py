"""Truncated Gaussian-series priors and the coefficient-space norm calculus."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from qbcmr.basis import FunctionCoefficients, SieveBasisSpec


def truncation_level(K: int) -> int:
    """Number of prior coefficients kept for first-stage dimension K."""
    return max(4 * int(K), 64)


@dataclass(frozen=True)
class GaussianSeriesPrior:
    """G = scale * sum_i sqrt(lambda_i) Z_i e_i with lambda_i = i^-(1 + 2 alpha/d)."""

    basis: SieveBasisSpec
    alpha: float
    scale: float = 1.0
    eigenvalues: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.scale >= 0 or not math.isfinite(self.scale):
            raise ValueError(f"scale must be finite and non-negative, got {self.scale}")
        i = np.arange(1, self.basis.size + 1, dtype=float)
        lam = i ** -(1.0 + 2.0 * self.alpha / self.basis.dim)
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def size(self) -> int:
        return self.basis.size

    @property
    def sd(self) -> np.ndarray:
        """Prior standard deviation of each coefficient."""
        return self.scale * np.sqrt(self.eigenvalues)

    @property
    def variances(self) -> np.ndarray:
        return self.scale**2 * self.eigenvalues


def sample_prior(prior: GaussianSeriesPrior, rng: np.random.Generator) -> FunctionCoefficients:
    z = rng.standard_normal(prior.size)
    return FunctionCoefficients(prior.basis, prior.sd * z)


def scaled_prior(alpha: float, J: int, K: int, n: int, basis: SieveBasisSpec | None = None) -> GaussianSeriesPrior:
    """Prior whose draws are shrunk by 1 / (sqrt(log n) sqrt(K)).

    The extra shrinkage grows with the first-stage sieve dimension and acts
    as regularisation of the ill-posed problem.
    """
    if n < 2:
        raise ValueError(f"n must be at least 2 so that log(n) > 0, got {n}")
    if K < 1 or J < 1:
        raise ValueError("J and K must be positive")
    if basis is None:
        basis = SieveBasisSpec("cosine", 1, J)
    elif basis.size != J:
        raise ValueError(f"basis size {basis.size} does not match J={J}")
    scale = 1.0 / (math.sqrt(math.log(n)) * math.sqrt(K))
    return GaussianSeriesPrior(basis, alpha, scale)


# ---------------------------------------------------------------------------
# norms


def _index_weights(h: FunctionCoefficients) -> np.ndarray:
    return np.arange(1, h.basis.size + 1, dtype=float)


def sobolev_norm(h: FunctionCoefficients, beta: float) -> float:
    i = _index_weights(h)
    return float(np.sqrt(np.sum(i ** (2.0 * beta / h.basis.dim) * h.coeffs**2)))


def rkhs_norm(h: FunctionCoefficients, alpha: float) -> float:
    """Norm of the RKHS of the (unscaled) alpha-regular series prior."""
    i = _index_weights(h)
    return float(np.sqrt(np.sum(i ** (1.0 + 2.0 * alpha / h.basis.dim) * h.coeffs**2)))


@dataclass(frozen=True)
class WeakNormWeights:
    """Shrinkage sequence sigma_i defining a weak norm.

    ``mild``: sigma_i = i^(-zeta/d).  ``severe``: sigma_i = exp(-R i^(zeta/d)).
    ``custom``: an explicit non-increasing sequence.
    """

    kind: str
    zeta: float = 0.0
    R: float = 0.0
    d: int = 1
    custom: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("mild", "severe", "custom"):
            raise ValueError(f"unknown weak-norm kind {self.kind!r}")
        if self.kind == "custom":
            if not self.custom:
                raise ValueError("custom weights need an explicit sequence")
            seq = np.asarray(self.custom, dtype=float)
            if np.any(seq < 0) or np.any(np.diff(seq) > 0):
                raise ValueError("custom weights must be non-negative and non-increasing")
        elif self.zeta < 0 or self.R < 0:
            raise ValueError("zeta and R must be non-negative")

    @classmethod
    def mild(cls, zeta: float, d: int = 1) -> "WeakNormWeights":
        return cls("mild", zeta=zeta, d=d)

    @classmethod
    def severe(cls, R: float, zeta: float, d: int = 1) -> "WeakNormWeights":
        return cls("severe", zeta=zeta, R=R, d=d)

    @classmethod
    def from_sequence(cls, sigma) -> "WeakNormWeights":
        return cls("custom", custom=tuple(float(s) for s in sigma))

    def at(self, i) -> np.ndarray | float:
        """sigma_i for one-based index (or array of indices) i."""
        i = np.asarray(i, dtype=float)
        if self.kind == "mild":
            out = i ** (-self.zeta / self.d)
        elif self.kind == "severe":
            out = np.exp(-self.R * i ** (self.zeta / self.d))
        else:
            seq = np.asarray(self.custom)
            idx = i.astype(int) - 1
            if np.any(idx >= seq.size):
                raise IndexError(f"custom weights only define {seq.size} terms")
            out = seq[idx]
        return float(out) if out.ndim == 0 else out

    def sequence(self, size: int) -> np.ndarray:
        return np.asarray(self.at(np.arange(1, size + 1)), dtype=float)


def weak_norm(h: FunctionCoefficients, w: WeakNormWeights) -> float:
    sigma = w.sequence(h.basis.size)
    return float(np.sqrt(np.sum(sigma**2 * h.coeffs**2)))
