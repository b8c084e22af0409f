"""Dataset I/O and the synthetic data generator used for validation runs.

On-disk dataset format: UTF-8 CSV with LF line endings, header
``feat_0,...,feat_{D-1},mos,noi,col,dis,loud`` and one row per clip.  The
five labels are listening-test style quality scores; generator output is
continuous, real datasets would hold per-clip mean ratings.  Floats are
serialized with ``%.17g`` so a write/load round trip is exact.

The synthetic generator draws features uniformly on [-1, 1]^D, passes them
through a fixed random bounded nonlinearity to get the mean vector, and adds
correlated Gaussian noise with a known covariance.  Both the mean map and the
noise covariance are recorded in a sidecar file so evaluation can compare
against ground truth.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .gaussian import Gaussian, _frozen

LABEL_NAMES = ("mos", "noi", "col", "dis", "loud")
N_LABELS = len(LABEL_NAMES)

LABEL_MIN = 1.0
LABEL_MAX = 5.0

# Canonical ground-truth noise shape for synthetic runs: per-dimension
# standard deviations and a correlation matrix whose strongest off-diagonal
# entry is rho(mos, noi) = 0.6 with a clear margin over the rest.
_TRUE_SD = np.array([0.55, 0.55, 0.55, 0.5, 0.45])
_TRUE_CORR = np.array([
    [1.00, 0.60, 0.30, 0.25, 0.20],
    [0.60, 1.00, 0.35, 0.30, 0.15],
    [0.30, 0.35, 1.00, 0.40, 0.10],
    [0.25, 0.30, 0.40, 1.00, 0.20],
    [0.20, 0.15, 0.10, 0.20, 1.00],
])


class DatasetError(ValueError):
    """Malformed dataset file; message carries the 1-based line number."""


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=float)
        if feats.ndim != 1 or feats.size == 0:
            raise ValueError("features must be a non-empty 1-D vector")
        if labels.shape != (N_LABELS,):
            raise ValueError(f"labels must have shape ({N_LABELS},)")
        if not (np.all(np.isfinite(feats)) and np.all(np.isfinite(labels))):
            raise ValueError("sample values must be finite")
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "labels", _frozen(labels))


def expected_header(input_dim: int) -> list[str]:
    return [f"feat_{i}" for i in range(input_dim)] + list(LABEL_NAMES)


def load_dataset(path, strict: bool = True) -> list[LabeledSample]:
    """Load a labeled CSV dataset.

    strict=True rejects labels outside [1, 5]; strict=False keeps them and
    issues a single warning with the offending row count.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: line 1: empty file") from None
        input_dim = len(header) - N_LABELS
        if input_dim < 1 or header != expected_header(input_dim):
            raise DatasetError(
                f"{path}: line 1: header must be feat_0..feat_{{D-1}} followed "
                f"by {','.join(LABEL_NAMES)}"
            )
        samples = []
        out_of_range = 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != input_dim + N_LABELS:
                raise DatasetError(
                    f"{path}: line {lineno}: expected "
                    f"{input_dim + N_LABELS} fields, got {len(row)}"
                )
            try:
                values = np.array([float(v) for v in row])
            except ValueError:
                raise DatasetError(
                    f"{path}: line {lineno}: non-numeric field"
                ) from None
            if not np.all(np.isfinite(values)):
                raise DatasetError(f"{path}: line {lineno}: non-finite value")
            labels = values[input_dim:]
            if np.any(labels < LABEL_MIN) or np.any(labels > LABEL_MAX):
                if strict:
                    raise DatasetError(
                        f"{path}: line {lineno}: label outside "
                        f"[{LABEL_MIN:g}, {LABEL_MAX:g}]"
                    )
                out_of_range += 1
            samples.append(LabeledSample(values[:input_dim], labels))
    if out_of_range:
        warnings.warn(
            f"{path}: {out_of_range} row(s) with labels outside "
            f"[{LABEL_MIN:g}, {LABEL_MAX:g}]",
            stacklevel=2,
        )
    if not samples:
        raise DatasetError(f"{path}: no data rows")
    return samples


def write_dataset(path, samples: list[LabeledSample]) -> None:
    if not samples:
        raise ValueError("refusing to write an empty dataset")
    input_dim = samples[0].features.size
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(expected_header(input_dim)) + "\n")
        for s in samples:
            if s.features.size != input_dim:
                raise ValueError("inconsistent feature dimension across samples")
            row = np.concatenate([s.features, s.labels])
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def stack(samples: list[LabeledSample]):
    """(X, Y) float64 design matrices for a sample list."""
    X = np.stack([s.features for s in samples])
    Y = np.stack([s.labels for s in samples])
    return X, Y


@dataclass(frozen=True)
class SynthSpec:
    """Ground truth for a synthetic dataset.

    Mean map: mu(x) = mean_base + mean_scale * tanh(W x).  Noise: y ~
    N(mu(x), cov).  mean_base = 3 centers scores in the label range and
    mean_scale bounds the swing so draws stay near [1, 5].
    """

    weight: np.ndarray
    cov: np.ndarray
    mean_base: float = 3.0
    mean_scale: float = 1.5

    def __post_init__(self):
        W = np.asarray(self.weight, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if W.ndim != 2 or W.shape[0] != N_LABELS or W.shape[1] < 1:
            raise ValueError(f"weight must be ({N_LABELS}, D) with D >= 1")
        if not np.all(np.isfinite(W)):
            raise ValueError("weight must be finite")
        # Gaussian() revalidates cov (symmetry, SPD via Cholesky).
        object.__setattr__(self, "weight", _frozen(W))
        object.__setattr__(self, "cov", _frozen(cov))
        object.__setattr__(self, "_noise", Gaussian.from_cov(np.zeros(N_LABELS), cov))

    @property
    def input_dim(self) -> int:
        return self.weight.shape[1]

    def mean(self, X: np.ndarray) -> np.ndarray:
        return self.mean_base + self.mean_scale * np.tanh(X @ self.weight.T)

    @classmethod
    def default(cls, input_dim: int = 32, seed: int = 0) -> "SynthSpec":
        """Canonical generator: random bounded mean map, fixed correlated noise.

        The weight scale keeps tanh inputs in the gently curved region, so
        the mean map is nonlinear but learnable at the default protocol's
        step budget; signal spread stays clearly above the noise floor.
        """
        rng = np.random.default_rng([seed, 1])
        scale = 0.6 / np.sqrt(input_dim)
        W = rng.normal(0.0, scale, size=(N_LABELS, input_dim))
        cov = np.outer(_TRUE_SD, _TRUE_SD) * _TRUE_CORR
        return cls(weight=W, cov=cov)


def generate_synthetic(spec: SynthSpec, count: int, seed: int):
    """Draw `count` labeled samples from the ground-truth model.

    A single generator stream produces features first, then noise, so the
    dataset is reproducible from (spec, count, seed) alone.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(count, spec.input_dim))
    noise = rng.standard_normal((count, N_LABELS)) @ spec._noise.chol.T
    Y = spec.mean(X) + noise
    return [LabeledSample(X[i], Y[i]) for i in range(count)]


def write_sidecar(path, spec: SynthSpec) -> None:
    """Ground-truth sidecar: key=value lines, matrices row-major."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"input_dim={spec.input_dim}\n")
        fh.write("mean_base=%.17g\n" % spec.mean_base)
        fh.write("mean_scale=%.17g\n" % spec.mean_scale)
        fh.write("weight=" + " ".join("%.17g" % v for v in spec.weight.ravel()) + "\n")
        fh.write("cov=" + " ".join("%.17g" % v for v in spec.cov.ravel()) + "\n")


def load_sidecar(path) -> SynthSpec:
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise DatasetError(f"{path}: line {lineno}: expected key=value")
            key, value = line.split("=", 1)
            entries[key.strip()] = value.strip()
    missing = {"input_dim", "mean_base", "mean_scale", "weight", "cov"} - set(entries)
    if missing:
        raise DatasetError(f"{path}: missing keys: {sorted(missing)}")
    try:
        input_dim = int(entries["input_dim"])
        weight = np.array([float(v) for v in entries["weight"].split()])
        cov = np.array([float(v) for v in entries["cov"].split()])
        spec = SynthSpec(
            weight=weight.reshape(N_LABELS, input_dim),
            cov=cov.reshape(N_LABELS, N_LABELS),
            mean_base=float(entries["mean_base"]),
            mean_scale=float(entries["mean_scale"]),
        )
    except (ValueError, TypeError) as exc:
        raise DatasetError(f"{path}: {exc}") from exc
    return spec


def split(samples: list[LabeledSample], fraction: float, seed: int):
    """Seeded shuffle split; `fraction` is the training share.

    Returns (train, holdout), disjoint and exhaustive.
    """
    if not (0.0 < fraction < 1.0):
        raise ValueError("fraction must lie in (0, 1)")
    n = len(samples)
    n_train = int(round(fraction * n))
    if n_train < 1 or n_train >= n:
        raise ValueError("split would leave an empty part")
    order = np.random.default_rng(seed).permutation(n)
    train = [samples[i] for i in order[:n_train]]
    holdout = [samples[i] for i in order[n_train:]]
    return train, holdout
