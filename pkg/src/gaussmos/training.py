"""Adam optimizer and the mini-batch maximum-likelihood training loop.

Defaults follow the reference protocol for this task: Adam with learning
rate 1e-4, beta1 = 0.9, beta2 = 0.999, 30 epochs.  The run is fully
deterministic given (data order, seeds, config): shuffling and dropout flow
from one seeded generator, batches keep the last partial slice, and the
per-sample loss reduction order is fixed by sample index.

The affine output map sits inside the loss path, so losses are always
evaluated on label scale against raw labels.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dataio import LabeledSample, stack
from .gaussian import AffineMap
from .head import (
    HeadConfig,
    HeadModel,
    forward_batch,
    backward_batch,
    init_head,
    param_list,
    with_params,
)
from .losses import VARIANTS, NumericFailure, variant_loss_grad

# Sanity bound on a single Adam update; the theoretical per-coordinate step
# is O(lr) once bias corrections settle.
STEP_BOUND_FACTOR = 10.0


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    variant: str = "full"
    affine: AffineMap = field(default_factory=AffineMap.default)

    def __post_init__(self):
        # learning_rate 0 is allowed: it must leave parameters bit-identical.
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1/beta2 must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")


@dataclass(frozen=True)
class AdamState:
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    step: int = 0

    @classmethod
    def zeros(cls, params) -> "AdamState":
        return cls(
            m=tuple(np.zeros_like(p) for p in params),
            v=tuple(np.zeros_like(p) for p in params),
            step=0,
        )


def adam_step(params, grads, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update; returns (new params, new state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state length mismatch")
    t = state.step + 1
    lr, b1, b2, eps = cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon
    new_params, new_m, new_v = [], [], []
    for k, (p, g) in enumerate(zip(params, grads)):
        if not np.all(np.isfinite(g)):
            raise NumericFailure(f"non-finite gradient in parameter block {k}")
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        delta = lr * m_hat / (np.sqrt(v_hat) + eps)
        if delta.size and np.max(np.abs(delta)) > STEP_BOUND_FACTOR * lr:
            raise NumericFailure(
                f"update magnitude exceeds {STEP_BOUND_FACTOR}x learning rate "
                f"in parameter block {k}"
            )
        new_params.append(p - delta)
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(tuple(new_m), tuple(new_v), t)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None
    seconds: float


def mean_loss(model: HeadModel, data: list[LabeledSample], variant: str,
              amap: AffineMap) -> float:
    """Mean per-sample loss in eval mode (no dropout)."""
    X, Y = stack(data)
    raw, _ = forward_batch(model, X, training=False)
    total = 0.0
    for i in range(len(data)):
        loss, _ = variant_loss_grad(variant, raw[i], Y[i], amap)
        total += loss
    return total / len(data)


def train(data: list[LabeledSample], val: list[LabeledSample] | None,
          head_cfg: HeadConfig, cfg: TrainConfig):
    """Mini-batch training of the head; returns (model, per-epoch records).

    Raises NumericFailure identifying the epoch/batch if a loss goes
    non-finite.
    """
    if not data:
        raise ValueError("training set is empty")
    X, Y = stack(data)
    if X.shape[1] != head_cfg.input_dim:
        raise ValueError(
            f"feature dimension {X.shape[1]} does not match head input_dim "
            f"{head_cfg.input_dim}"
        )

    model = init_head(head_cfg)
    params = param_list(model)
    state = AdamState.zeros(params)
    rng = np.random.default_rng(cfg.seed)
    amap = cfg.affine
    n_samples = len(data)
    records: list[EpochRecord] = []

    for epoch in range(1, cfg.epochs + 1):
        tic = time.perf_counter()
        order = rng.permutation(n_samples)
        epoch_loss = 0.0
        for batch_idx, start in enumerate(range(0, n_samples, cfg.batch_size)):
            sel = order[start:start + cfg.batch_size]
            raw, cache = forward_batch(model, X[sel], training=True, rng=rng)
            d_raw = np.empty_like(raw)
            batch_loss = 0.0
            try:
                for i in range(sel.size):
                    loss, grad = variant_loss_grad(
                        cfg.variant, raw[i], Y[sel[i]], amap)
                    batch_loss += loss
                    d_raw[i] = grad
            except NumericFailure as exc:
                raise NumericFailure(
                    f"epoch {epoch} batch {batch_idx}: {exc}") from exc
            if not np.isfinite(batch_loss):
                raise NumericFailure(
                    f"non-finite loss at epoch {epoch} batch {batch_idx}"
                )
            epoch_loss += batch_loss
            grads = backward_batch(model, cache, d_raw / sel.size)
            try:
                params, state = adam_step(params, grads, state, cfg)
            except NumericFailure as exc:
                raise NumericFailure(
                    f"epoch {epoch} batch {batch_idx}: {exc}") from exc
            model = with_params(model, params)
        val_loss = (
            mean_loss(model, val, cfg.variant, amap) if val else None
        )
        records.append(EpochRecord(
            epoch=epoch,
            train_loss=epoch_loss / n_samples,
            val_loss=val_loss,
            seconds=time.perf_counter() - tic,
        ))
    return model, records


def write_trace(records: list[EpochRecord], path) -> None:
    """Plain-text trace table, one epoch per line."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{'epoch':>5} {'train_loss':>18} {'val_loss':>18} {'seconds':>9}\n")
        for r in records:
            val = f"{r.val_loss:.12g}" if r.val_loss is not None else "nan"
            fh.write(f"{r.epoch:>5} {r.train_loss:>18.12g} {val:>18} "
                     f"{r.seconds:>9.3f}\n")
