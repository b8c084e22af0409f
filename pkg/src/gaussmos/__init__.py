"""Multivariate Gaussian regression for 5-dimensional speech-quality scores.

A dense head predicts a mean vector and a Cholesky-parameterized covariance,
an affine output map places both on label scale, and training minimizes the
Gaussian negative log-likelihood.  Inference yields point scores plus
per-dimension uncertainty and cross-dimension correlations.
"""

from .dataio import (
    LABEL_NAMES,
    DatasetError,
    LabeledSample,
    SynthSpec,
    generate_synthetic,
    load_dataset,
    load_sidecar,
    split,
    write_dataset,
    write_sidecar,
)
from .gaussian import (
    DIAG_FLOOR,
    AffineMap,
    Gaussian,
    affine_transform,
    cholesky_transform,
    correlation,
    log_density,
    marginalize,
    sample,
    softplus,
    softplus_inv,
)
from .head import (
    QUALITY_DIMS,
    HeadConfig,
    HeadModel,
    Prediction,
    forward,
    init_head,
    load_checkpoint,
    predict,
    raw_to_gaussian,
    save_checkpoint,
    variant_output_dim,
)
from .losses import (
    VARIANTS,
    NumericFailure,
    RawGradient,
    diag_gnll_grad_raw,
    diag_gnll_loss,
    gnll_grad_gaussian,
    gnll_grad_raw,
    gnll_loss,
    mse_grad,
    mse_loss,
    variant_loss,
    variant_loss_grad,
)
from .metrics import (
    ConstantInputError,
    EvalReport,
    aggregate_reports,
    emit_correlation_scatter,
    emit_marginal_grid,
    evaluate,
    pcc,
    rmse,
)
from .training import AdamState, EpochRecord, TrainConfig, adam_step, train

__all__ = [
    "AdamState",
    "AffineMap",
    "ConstantInputError",
    "DIAG_FLOOR",
    "DatasetError",
    "EpochRecord",
    "EvalReport",
    "Gaussian",
    "HeadConfig",
    "HeadModel",
    "LABEL_NAMES",
    "LabeledSample",
    "NumericFailure",
    "Prediction",
    "QUALITY_DIMS",
    "RawGradient",
    "SynthSpec",
    "TrainConfig",
    "VARIANTS",
    "adam_step",
    "affine_transform",
    "aggregate_reports",
    "cholesky_transform",
    "correlation",
    "diag_gnll_grad_raw",
    "diag_gnll_loss",
    "emit_correlation_scatter",
    "emit_marginal_grid",
    "evaluate",
    "forward",
    "generate_synthetic",
    "gnll_grad_gaussian",
    "gnll_grad_raw",
    "gnll_loss",
    "init_head",
    "load_checkpoint",
    "load_dataset",
    "load_sidecar",
    "log_density",
    "marginalize",
    "mse_grad",
    "mse_loss",
    "pcc",
    "predict",
    "raw_to_gaussian",
    "rmse",
    "sample",
    "save_checkpoint",
    "softplus",
    "softplus_inv",
    "split",
    "train",
    "variant_loss",
    "variant_loss_grad",
    "variant_output_dim",
    "write_dataset",
    "write_sidecar",
]
