"""Semi-supervised domain adaptation with dynamic distribution alignment."""

from ._core import (
    IoError,
    Model,
    NumericError,
    ValidationError,
    accuracy,
    alpha_at,
    band_variance,
    beta_of,
    cmmd,
    confidence_threshold,
    de_features,
    differential_entropy,
    median_bandwidth,
    mmd,
    parameter_count,
    run_cli,
    synth_shift,
    train,
)

__all__ = [
    "IoError",
    "Model",
    "NumericError",
    "ValidationError",
    "accuracy",
    "alpha_at",
    "band_variance",
    "beta_of",
    "cmmd",
    "confidence_threshold",
    "de_features",
    "differential_entropy",
    "median_bandwidth",
    "mmd",
    "parameter_count",
    "run_cli",
    "synth_shift",
    "train",
]
