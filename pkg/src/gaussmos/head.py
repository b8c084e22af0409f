"""Dense prediction head: feature vector in, raw Gaussian parameterization out.

Three fully connected layers by default (ReLU on the hidden ones, linear
output), with the output width set by the variant:

    full         mean (5) + packed lower triangle (15)  -> 20
    independent  mean (5) + diagonal scales (5)         -> 10
    mse          mean (5)                               ->  5

The forward/backward passes are plain numpy; the trainer drives them through
the batched helpers.  Checkpoints are a flat container: a text header with
the config followed by raw little-endian float64 weights, so identical
models produce identical bytes.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .gaussian import (
    DIAG_FLOOR,
    AffineMap,
    Gaussian,
    affine_transform,
    cholesky_transform,
    softplus,
    tri_size,
)
from .losses import VARIANTS

QUALITY_DIMS = 5

_CHECKPOINT_MAGIC = b"gaussmos-head v1\n"


def variant_output_dim(variant: str, n: int = QUALITY_DIMS) -> int:
    if variant == "full":
        return n + tri_size(n)
    if variant == "independent":
        return 2 * n
    if variant == "mse":
        return n
    raise ValueError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class HeadConfig:
    input_dim: int
    hidden_dims: tuple[int, ...] = (256, 64)
    variant: str = "full"
    dropout_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden layer widths must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    @property
    def output_dim(self) -> int:
        return variant_output_dim(self.variant)

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_dims, self.output_dim]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]


@dataclass(frozen=True)
class HeadModel:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    config: HeadConfig

    def __post_init__(self):
        shapes = self.config.layer_shapes
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ValueError("layer count does not match config")
        frozen_w, frozen_b = [], []
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            W = np.asarray(W, dtype=float)
            b = np.asarray(b, dtype=float)
            if W.shape != shapes[k] or b.shape != (shapes[k][0],):
                raise ValueError(
                    f"layer {k}: expected {shapes[k]} / ({shapes[k][0]},), "
                    f"got {W.shape} / {b.shape}"
                )
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k} contains non-finite parameters")
            W = W.copy()
            b = b.copy()
            W.flags.writeable = False
            b.flags.writeable = False
            frozen_w.append(W)
            frozen_b.append(b)
        object.__setattr__(self, "weights", tuple(frozen_w))
        object.__setattr__(self, "biases", tuple(frozen_b))


@dataclass(frozen=True)
class Prediction:
    """Post-transform Gaussian on label scale plus its ML point estimate."""

    gaussian: Gaussian
    point: np.ndarray


def init_head(config: HeadConfig) -> HeadModel:
    """Glorot-uniform weights (±sqrt(6/(fan_in+fan_out))), zero biases,
    deterministic per config.seed."""
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    for out_dim, in_dim in config.layer_shapes:
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        weights.append(rng.uniform(-limit, limit, size=(out_dim, in_dim)))
        biases.append(np.zeros(out_dim))
    return HeadModel(tuple(weights), tuple(biases), config)


def with_params(model: HeadModel, params: list[np.ndarray]) -> HeadModel:
    """Rebuild a model from the flat [W0, b0, W1, b1, ...] parameter list."""
    k = len(model.weights)
    return HeadModel(tuple(params[0:2 * k:2]), tuple(params[1:2 * k:2]), model.config)


def param_list(model: HeadModel) -> list[np.ndarray]:
    out = []
    for W, b in zip(model.weights, model.biases):
        out.extend([W, b])
    return out


def forward(model: HeadModel, x, training: bool = False, dropout_seed: int = 0) -> np.ndarray:
    """Raw head output for one feature vector.

    Hidden layers are ReLU; the output layer is linear.  Dropout (inverted
    scaling) touches hidden activations only, and only when training with a
    positive rate, drawn from a generator seeded by dropout_seed.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (model.config.input_dim,):
        raise ValueError(
            f"input must have length {model.config.input_dim}, got shape {x.shape}"
        )
    rng = np.random.default_rng(dropout_seed) if training else None
    raw, _ = forward_batch(model, x[None, :], training=training, rng=rng)
    return raw[0]


def forward_batch(model: HeadModel, X: np.ndarray, training: bool = False,
                  rng: np.random.Generator | None = None):
    """Batched forward pass; returns (raw outputs, cache for backward)."""
    rate = model.config.dropout_rate if training else 0.0
    inputs, relu_masks, drop_masks = [], [], []
    h = np.asarray(X, dtype=float)
    last = len(model.weights) - 1
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        inputs.append(h)
        z = h @ W.T + b
        if k == last:
            h = z
            break
        mask = z > 0.0
        h = np.where(mask, z, 0.0)
        relu_masks.append(mask)
        if rate > 0.0:
            keep = rng.random(h.shape) >= rate
            h = h * keep / (1.0 - rate)
            drop_masks.append(keep)
        else:
            drop_masks.append(None)
    return h, (inputs, relu_masks, drop_masks)


def backward_batch(model: HeadModel, cache, d_raw: np.ndarray) -> list[np.ndarray]:
    """Parameter gradients [dW0, db0, ...] given d(loss)/d(raw outputs)."""
    inputs, relu_masks, drop_masks = cache
    rate = model.config.dropout_rate
    grads: list[np.ndarray] = []
    g = np.asarray(d_raw, dtype=float)
    for k in range(len(model.weights) - 1, -1, -1):
        grads.append(g.sum(axis=0))          # db
        grads.append(g.T @ inputs[k])        # dW
        if k == 0:
            break
        g = g @ model.weights[k]
        if drop_masks[k - 1] is not None:
            g = g * drop_masks[k - 1] / (1.0 - rate)
        g = g * relu_masks[k - 1]
    grads.reverse()
    return grads


def raw_to_gaussian(raw: np.ndarray, variant: str, amap: AffineMap) -> Gaussian:
    """Interpret a raw head output as a label-scale Gaussian."""
    n = amap.dim
    raw = np.asarray(raw, dtype=float)
    if variant == "full":
        cov, chol = cholesky_transform(raw[n:])
        return affine_transform(Gaussian(raw[:n], cov, chol), amap)
    if variant == "independent":
        sd = np.maximum(softplus(raw[n:]), DIAG_FLOOR)
        g = Gaussian(raw[:n], np.diag(sd * sd), np.diag(sd))
        return affine_transform(g, amap)
    if variant == "mse":
        # Placeholder identity covariance so downstream reporting stays
        # variant-agnostic; only the mean is transformed.
        mean = amap.A @ raw + amap.b
        eye = np.eye(n)
        return Gaussian(mean, eye, eye)
    raise ValueError(f"unknown variant {variant!r}")


def predict(model: HeadModel, x, amap: AffineMap) -> Prediction:
    """Deterministic inference: forward, split per variant, transform.

    The point estimate is the transformed mean (the ML estimator of a
    Gaussian is its mean).
    """
    raw = forward(model, x, training=False)
    g = raw_to_gaussian(raw, model.config.variant, amap)
    return Prediction(gaussian=g, point=g.mean)


def save_checkpoint(model: HeadModel, path) -> None:
    """Write the flat checkpoint: text header, blank line, then per layer the
    row-major float64 weight matrix followed by the bias vector."""
    cfg = model.config
    header = io.StringIO()
    header.write(f"variant={cfg.variant}\n")
    header.write(f"input_dim={cfg.input_dim}\n")
    header.write(f"hidden_dims={','.join(str(h) for h in cfg.hidden_dims)}\n")
    header.write(f"dropout_rate={cfg.dropout_rate!r}\n")
    header.write(f"seed={cfg.seed}\n")
    header.write("\n")
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(header.getvalue().encode("ascii"))
        for W, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> HeadModel:
    """Inverse of save_checkpoint; round-trips bit-exactly."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(_CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a gaussmos checkpoint")
    head_end = blob.index(b"\n\n", len(_CHECKPOINT_MAGIC))
    fields = {}
    for line in blob[len(_CHECKPOINT_MAGIC):head_end].decode("ascii").splitlines():
        key, _, value = line.partition("=")
        fields[key] = value
    try:
        hidden = tuple(int(h) for h in fields["hidden_dims"].split(",") if h)
        config = HeadConfig(
            input_dim=int(fields["input_dim"]),
            hidden_dims=hidden,
            variant=fields["variant"],
            dropout_rate=float(fields["dropout_rate"]),
            seed=int(fields["seed"]),
        )
    except (KeyError, ValueError) as err:
        raise ValueError(f"{path}: malformed checkpoint header: {err}") from err
    payload = blob[head_end + 2:]
    weights, biases = [], []
    offset = 0
    for out_dim, in_dim in config.layer_shapes:
        nw, nb = out_dim * in_dim, out_dim
        need = (nw + nb) * 8
        if offset + need > len(payload):
            raise ValueError(f"{path}: truncated checkpoint payload")
        W = np.frombuffer(payload, dtype="<f8", count=nw, offset=offset)
        offset += nw * 8
        b = np.frombuffer(payload, dtype="<f8", count=nb, offset=offset)
        offset += nb * 8
        weights.append(W.reshape(out_dim, in_dim))
        biases.append(b)
    if offset != len(payload):
        raise ValueError(f"{path}: trailing bytes in checkpoint payload")
    return HeadModel(tuple(weights), tuple(biases), config)
