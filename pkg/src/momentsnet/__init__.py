"""Learning-free feature networks built from classical image-moment kernels."""
from .baseline_pca import jacobi_eigh, learn_pca_banks, learn_pca_filters
from .classifier import LinearModel, accuracy, load_model, predict, save_model, train
from .data import Dataset, generate_shapes, load_dataset, load_image, rescale, split
from .kernels import FAMILIES, KernelBank, MomentFamily, build_kernel_bank, enumerate_orders, moment_project
from .pipeline import (
    Image,
    NetConfig,
    auto_threshold,
    build_banks,
    extract_batch,
    extract_features,
    feature_dim,
    ones_fraction,
)

__version__ = "0.1.0"

__all__ = [
    "jacobi_eigh",
    "learn_pca_banks",
    "learn_pca_filters",
    "LinearModel",
    "accuracy",
    "load_model",
    "predict",
    "save_model",
    "train",
    "Dataset",
    "generate_shapes",
    "load_dataset",
    "load_image",
    "rescale",
    "split",
    "FAMILIES",
    "KernelBank",
    "MomentFamily",
    "build_kernel_bank",
    "enumerate_orders",
    "moment_project",
    "Image",
    "NetConfig",
    "auto_threshold",
    "build_banks",
    "extract_batch",
    "extract_features",
    "feature_dim",
    "ones_fraction",
]
