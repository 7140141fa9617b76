"""Causal representation learning for lung CT (native core via pybind11)."""

from ._core import (
    ArgumentError,
    DataError,
    Error,
    FormatError,
    InfeasibleError,
    Model,
    NumericalError,
    ShapeError,
    binarize,
    dcor,
    dcor_squared,
    default_config,
    h_logdet,
    h_trace_exp,
    is_acyclic,
    knn_mi,
    metrics,
    normalize_config,
    phantom_truth,
    roc_auc,
    sample_phantom,
    shannon_entropy,
    shd,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
