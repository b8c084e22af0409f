"""Training losses and their closed-form gradients w.r.t. raw head outputs.

The Gaussian negative log-likelihood here is

    gnll = 0.5 * [ ln|cov| + (y - mu)ᵀ cov⁻¹ (y - mu) ]

i.e. it deliberately EXCLUDES the constant (n/2)·ln 2π, so
gnll_loss(g, y) == -log_density(g, y) - (n/2)·ln 2π.  Keep that offset in
mind when comparing against density values.

Gradients are hand-derived backward passes (the graph is tiny and fixed),
validated against a central finite-difference oracle in the test suite.
With r = y - mu:

    d/d mu  = -cov⁻¹ r
    d/d cov = 0.5 (cov⁻¹ - cov⁻¹ r rᵀ cov⁻¹)

and the chain continues through the affine map, the factor product L Lᵀ and
the diagonal softplus.  Quadratic forms and the precision use triangular
solves against the Cholesky factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .gaussian import (
    DIAG_FLOOR,
    AffineMap,
    Gaussian,
    cholesky_transform,
    softplus,
    tri_size,
)

VARIANTS = ("full", "independent", "mse")


class NumericFailure(FloatingPointError):
    """A non-finite value appeared where the math guarantees finiteness."""


@dataclass(frozen=True)
class RawGradient:
    """Gradient w.r.t. the raw head output: mean block plus triangle block.

    d_tri is empty for the mse variant and holds only the diagonal entries
    for the independent variant.
    """

    d_mean: np.ndarray
    d_tri: np.ndarray

    def concat(self) -> np.ndarray:
        return np.concatenate([self.d_mean, self.d_tri])


def _diag_positions(n: int) -> np.ndarray:
    # Index of (i, i) inside the row-major packed lower triangle.
    return np.array([tri_size(i + 1) - 1 for i in range(n)])


def gnll_loss(g: Gaussian, y) -> float:
    """0.5 [ln|cov| + rᵀ cov⁻¹ r], constant-free."""
    y = np.asarray(y, dtype=float)
    if y.shape != (g.dim,):
        raise ValueError(f"y must have length {g.dim}, got shape {y.shape}")
    z = solve_triangular(g.chol, y - g.mean, lower=True, check_finite=False)
    log_det = 2.0 * np.sum(np.log(np.diagonal(g.chol)))
    return float(0.5 * (log_det + z @ z))


def gnll_grad_gaussian(g: Gaussian, y) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of gnll_loss w.r.t. the (post-transform) mean and covariance."""
    y = np.asarray(y, dtype=float)
    if y.shape != (g.dim,):
        raise ValueError(f"y must have length {g.dim}, got shape {y.shape}")
    r = y - g.mean
    z = solve_triangular(g.chol, r, lower=True, check_finite=False)
    alpha = solve_triangular(g.chol.T, z, lower=False, check_finite=False)
    precision = cho_solve((np.asarray(g.chol), True), np.eye(g.dim),
                          check_finite=False)
    d_mean = -alpha
    d_cov = 0.5 * (precision - np.outer(alpha, alpha))
    return d_mean, d_cov


def _gnll_value_and_grad(raw_mean, raw_tri, y, amap, tri_mask=None):
    """Loss and gradient of the full pipeline raw -> cholesky -> affine -> gnll.

    tri_mask, when given, restricts d_tri to those packed positions (used by
    the diagonal variant, whose off-diagonal raw entries are fixed at zero).
    """
    n = amap.dim
    raw_mean = np.asarray(raw_mean, dtype=float)
    raw_tri = np.asarray(raw_tri, dtype=float)
    y = np.asarray(y, dtype=float)
    if raw_mean.shape != (n,) or y.shape != (n,):
        raise ValueError("mean/label length does not match the affine map")
    if raw_tri.shape != (tri_size(n),):
        raise ValueError(
            f"triangle block must have length {tri_size(n)}, got {raw_tri.shape}"
        )

    cov, L = cholesky_transform(raw_tri)
    mean_hat = amap.A @ raw_mean + amap.b
    cov_hat = amap.A @ cov @ amap.A.T
    cov_hat = 0.5 * (cov_hat + cov_hat.T)
    if not np.all(np.isfinite(cov_hat)):
        raise NumericFailure("covariance overflowed to non-finite values")
    try:
        chol_hat = np.linalg.cholesky(cov_hat)
    except np.linalg.LinAlgError as err:
        raise NumericFailure(f"covariance factorization failed: {err}") from err

    r = y - mean_hat
    z = solve_triangular(chol_hat, r, lower=True, check_finite=False)
    log_det = 2.0 * np.sum(np.log(np.diagonal(chol_hat)))
    loss = float(0.5 * (log_det + z @ z))

    alpha = solve_triangular(chol_hat.T, z, lower=False, check_finite=False)
    precision = cho_solve((chol_hat, True), np.eye(n), check_finite=False)
    d_mean_hat = -alpha
    d_cov_hat = 0.5 * (precision - np.outer(alpha, alpha))

    d_mean = amap.A.T @ d_mean_hat
    d_cov = amap.A.T @ d_cov_hat @ amap.A
    dL = 2.0 * d_cov @ L
    # Diagonal entries pass through softplus (derivative sigmoid), clamped to
    # zero wherever the post-softplus floor is active.
    tril = np.tril_indices(n)
    diag_raw = raw_tri[_diag_positions(n)]
    sig = 1.0 / (1.0 + np.exp(-diag_raw))
    sig[softplus(diag_raw) < DIAG_FLOOR] = 0.0
    dL[np.diag_indices(n)] *= sig
    d_tri = dL[tril]
    if tri_mask is not None:
        d_tri = d_tri[tri_mask]

    grad = RawGradient(d_mean=d_mean, d_tri=d_tri)
    _check_finite(loss, grad)
    return loss, grad


def _check_finite(loss: float, grad: RawGradient):
    if not np.isfinite(loss):
        raise NumericFailure("loss is non-finite")
    for name, block in (("d_mean", grad.d_mean), ("d_tri", grad.d_tri)):
        bad = np.flatnonzero(~np.isfinite(block))
        if bad.size:
            raise NumericFailure(f"non-finite gradient in {name} entry {bad[0]}")


def gnll_grad_raw(raw, y, amap: AffineMap) -> RawGradient:
    """Exact gradient of gnll(affine(cholesky(raw)), y) w.r.t. all raw entries.

    raw holds the mean block (length n) followed by the packed triangle
    (length n(n+1)/2); 20 values for the 5-dimensional task.
    """
    n = amap.dim
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (n + tri_size(n),):
        raise ValueError(f"raw must have length {n + tri_size(n)}, got {raw.shape}")
    _, grad = _gnll_value_and_grad(raw[:n], raw[n:], y, amap)
    return grad


def mse_loss(mean_pred, y) -> float:
    """(1/n) sum of squared errors."""
    mean_pred = np.asarray(mean_pred, dtype=float)
    y = np.asarray(y, dtype=float)
    if mean_pred.shape != y.shape or mean_pred.ndim != 1:
        raise ValueError(
            f"shape mismatch: prediction {mean_pred.shape} vs labels {y.shape}"
        )
    d = mean_pred - y
    return float(d @ d / d.size)


def mse_grad(mean_pred, y) -> np.ndarray:
    """Gradient of mse_loss w.r.t. the prediction: (2/n)(pred - y)."""
    mean_pred = np.asarray(mean_pred, dtype=float)
    y = np.asarray(y, dtype=float)
    if mean_pred.shape != y.shape or mean_pred.ndim != 1:
        raise ValueError(
            f"shape mismatch: prediction {mean_pred.shape} vs labels {y.shape}"
        )
    return 2.0 / y.size * (mean_pred - y)


def _mse_value_and_grad(raw_mean, y, amap):
    pred = amap.A @ np.asarray(raw_mean, dtype=float) + amap.b
    loss = mse_loss(pred, y)
    grad = RawGradient(d_mean=amap.A.T @ mse_grad(pred, y), d_tri=np.zeros(0))
    _check_finite(loss, grad)
    return loss, grad


def diag_gnll_loss(means, scale_raw, y, amap: AffineMap) -> float:
    """GNLL with diagonal covariance, std_i = softplus(scale_raw_i).

    Definitionally the full pipeline with off-diagonal raw entries at zero,
    and routed through the same code so equality is exact.
    """
    loss, _ = _diag_value_and_grad(means, scale_raw, y, amap)
    return loss


def diag_gnll_grad_raw(means, scale_raw, y, amap: AffineMap) -> RawGradient:
    """Gradient of diag_gnll_loss w.r.t. the 2n raw values (means, scales)."""
    _, grad = _diag_value_and_grad(means, scale_raw, y, amap)
    return grad


def _diag_value_and_grad(means, scale_raw, y, amap):
    n = amap.dim
    scale_raw = np.asarray(scale_raw, dtype=float)
    if scale_raw.shape != (n,):
        raise ValueError(f"scale block must have length {n}, got {scale_raw.shape}")
    raw_tri = np.zeros(tri_size(n))
    pos = _diag_positions(n)
    raw_tri[pos] = scale_raw
    return _gnll_value_and_grad(means, raw_tri, y, amap, tri_mask=pos)


def variant_loss(variant: str, raw, y, amap: AffineMap) -> float:
    """Per-sample training loss for a raw head output of the given variant."""
    loss, _ = variant_loss_grad(variant, raw, y, amap)
    return loss


def variant_loss_grad(variant: str, raw, y, amap: AffineMap):
    """(loss, flat gradient) for one sample; gradient length matches raw."""
    n = amap.dim
    raw = np.asarray(raw, dtype=float)
    if variant == "full":
        loss, grad = _gnll_value_and_grad(raw[:n], raw[n:], y, amap)
    elif variant == "independent":
        if raw.shape != (2 * n,):
            raise ValueError(f"independent raw must have length {2 * n}")
        loss, grad = _diag_value_and_grad(raw[:n], raw[n:], y, amap)
    elif variant == "mse":
        if raw.shape != (n,):
            raise ValueError(f"mse raw must have length {n}")
        loss, grad = _mse_value_and_grad(raw, y, amap)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return loss, grad.concat()
