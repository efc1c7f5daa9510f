"""Image manipulation detection with a one-and-a-half-class SVM detector."""

from ._core import (
    AttackConfig,
    Detector,
    ExperimentConfig,
    Prediction,
    SvmModel,
    add_gaussian_noise,
    apply_manipulation,
    jpeg_cycle,
    load_detector,
    mse,
    pixel_change_fraction,
    read_image,
    roc_auc,
    run_attack,
    run_experiment,
    spam_features,
    train_one_class,
    train_two_class,
    write_image,
)

__all__ = [
    "AttackConfig",
    "Detector",
    "ExperimentConfig",
    "Prediction",
    "SvmModel",
    "add_gaussian_noise",
    "apply_manipulation",
    "jpeg_cycle",
    "load_detector",
    "mse",
    "pixel_change_fraction",
    "read_image",
    "roc_auc",
    "run_attack",
    "run_experiment",
    "spam_features",
    "train_one_class",
    "train_two_class",
    "write_image",
]
