"""Multivariate Gaussian value types and exact transforms.

The covariance path is Cholesky-first: an unconstrained vector packs the
lower triangle of a factor row-major, softplus maps the diagonal to positive
values, and the product L Lᵀ is the covariance.  Densities, samples and
quadratic forms go through triangular solves against the cached factor;
nothing in this module ever forms an explicit matrix inverse.

All values are immutable after construction (arrays are frozen), so they are
safe to share across threads.  Everything here is dimension-generic; the
quality-score task uses n = 5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

# Post-softplus floor for factor diagonals: softplus alone underflows to 0.0
# for large negative inputs, which would make the covariance singular.
DIAG_FLOOR = 1e-6

LOG_2PI = math.log(2.0 * math.pi)


def softplus(x):
    """Numerically stable ln(1 + e^x), elementwise."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus_inv(y):
    """Inverse of softplus: ln(e^y - 1), stable for both tiny and huge y."""
    y = np.asarray(y, dtype=float)
    return y + np.log1p(-np.exp(-y))


def tri_size(n: int) -> int:
    """Entry count of the lower triangle of an n x n matrix."""
    return n * (n + 1) // 2


def dim_from_tri(m: int) -> int:
    """Matrix dimension whose lower triangle has m entries."""
    n = int((math.isqrt(8 * m + 1) - 1) // 2)
    if tri_size(n) != m:
        raise ValueError(f"{m} is not a triangular number")
    return n


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


def _check_vector(v, n: int | None, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {v.shape}")
    if n is not None and v.size != n:
        raise ValueError(f"{name} must have length {n}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


@dataclass(frozen=True)
class AffineMap:
    """Output transform (A, b): a Gaussian (mu, cov) maps to (A mu + b, A cov Aᵀ).

    A must be invertible so the map preserves positive definiteness.  The
    default for the 5-dimensional quality task is A = 2I, b = (3,3,3,3,3),
    which places raw network outputs near zero onto the 1..5 score scale.
    """

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        _check_vector(b, A.shape[0], "b")
        if not np.all(np.isfinite(A)):
            raise ValueError("A contains non-finite entries")
        if abs(np.linalg.det(A)) <= 1e-12:
            raise ValueError("A is singular (|det A| <= 1e-12)")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))

    @property
    def dim(self) -> int:
        return self.b.size

    @staticmethod
    def default(n: int = 5) -> "AffineMap":
        return AffineMap(2.0 * np.eye(n), np.full(n, 3.0))

    @staticmethod
    def identity(n: int = 5) -> "AffineMap":
        return AffineMap(np.eye(n), np.zeros(n))


@dataclass(frozen=True)
class Gaussian:
    """Mean vector plus covariance of an n-dim Gaussian, with the lower
    Cholesky factor of the covariance cached for densities and sampling."""

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray

    def __post_init__(self):
        mean = _check_vector(self.mean, None, "mean")
        n = mean.size
        cov = np.asarray(self.cov, dtype=float)
        chol = np.asarray(self.chol, dtype=float)
        if cov.shape != (n, n) or chol.shape != (n, n):
            raise ValueError(
                f"cov/chol must be {n}x{n}, got {cov.shape} and {chol.shape}"
            )
        if not (np.all(np.isfinite(cov)) and np.all(np.isfinite(chol))):
            raise ValueError("covariance or factor contains non-finite entries")
        if np.max(np.abs(cov - cov.T)) > 1e-12:
            raise ValueError("covariance is not symmetric within 1e-12")
        resid = chol @ chol.T - cov
        denom = max(np.linalg.norm(cov), np.finfo(float).tiny)
        if np.linalg.norm(resid) > 1e-10 * denom:
            raise ValueError("factor does not reproduce covariance (1e-10 rel)")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))
        object.__setattr__(self, "chol", _frozen(chol))

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def from_cov(cls, mean, cov) -> "Gaussian":
        """Build from mean and covariance; fails if cov is not SPD."""
        cov = np.asarray(cov, dtype=float)
        if not np.all(np.isfinite(cov)):
            raise ValueError("covariance contains non-finite entries")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as err:
            raise ValueError("covariance is not positive definite") from err
        return cls(mean, cov, chol)


def cholesky_transform(raw) -> tuple[np.ndarray, np.ndarray]:
    """Map n(n+1)/2 unconstrained values to an SPD covariance and its factor.

    The vector packs the lower triangle row-major: (0,0), (1,0), (1,1),
    (2,0), ...  Softplus is applied to the diagonal only, then floored at
    DIAG_FLOOR; off-diagonals pass through unchanged.  Returns (L Lᵀ, L).
    """
    raw = _check_vector(raw, None, "raw")
    n = dim_from_tri(raw.size)
    L = np.zeros((n, n))
    L[np.tril_indices(n)] = raw
    d = np.maximum(softplus(np.diagonal(L)), DIAG_FLOOR)
    L[np.diag_indices(n)] = d
    cov = L @ L.T
    cov = 0.5 * (cov + cov.T)
    return cov, L


def affine_transform(g: Gaussian, amap: AffineMap) -> Gaussian:
    """Push a Gaussian through y -> Ay + b: (A mu + b, A cov Aᵀ)."""
    if amap.dim != g.dim:
        raise ValueError(f"map dimension {amap.dim} != Gaussian dimension {g.dim}")
    mean = amap.A @ g.mean + amap.b
    cov = amap.A @ g.cov @ amap.A.T
    cov = 0.5 * (cov + cov.T)
    return Gaussian.from_cov(mean, cov)


def log_density(g: Gaussian, y) -> float:
    """ln N(y; mean, cov), constant included, via triangular solves."""
    y = _check_vector(y, g.dim, "y")
    z = solve_triangular(g.chol, y - g.mean, lower=True, check_finite=False)
    log_det = 2.0 * np.sum(np.log(np.diagonal(g.chol)))
    return float(-0.5 * (g.dim * LOG_2PI + log_det + z @ z))


def marginalize(g: Gaussian, dims) -> Gaussian:
    """Restrict to a subset of coordinates (Gaussian marginals are sub-blocks).

    dims must be non-empty, strictly increasing and within range.
    """
    dims = list(dims)
    if not dims:
        raise ValueError("dims must be non-empty")
    if any(int(d) != d for d in dims):
        raise ValueError("dims must be integers")
    dims = [int(d) for d in dims]
    if any(d < 0 or d >= g.dim for d in dims):
        raise ValueError(f"dims out of range for dimension {g.dim}: {dims}")
    if any(b <= a for a, b in zip(dims, dims[1:])):
        raise ValueError(f"dims must be strictly increasing: {dims}")
    idx = np.asarray(dims)
    return Gaussian.from_cov(g.mean[idx], g.cov[np.ix_(idx, idx)])


def correlation(cov, i: int, j: int) -> float:
    """Pearson correlation cov_ij / sqrt(cov_ii cov_jj), clamped to [-1, 1]."""
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"indices ({i}, {j}) out of range for dimension {n}")
    rho = cov[i, j] / math.sqrt(cov[i, i] * cov[j, j])
    return float(min(1.0, max(-1.0, rho)))


def sample(g: Gaussian, count: int, seed: int) -> np.ndarray:
    """Draw `count` rows y = mean + L z, z standard normal from a seeded
    generator.  Same (g, count, seed) gives bit-identical output."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, g.dim))
    return g.mean + z @ g.chol.T
