"""Multi-label classification with a label-mixture VAE and contrastive embeddings."""

from .autodiff import Tape, Tensor
from .data import Batch, Dataset
from .losses import LossBreakdown, total_objective
from .metrics import MetricsReport, compute_report
from .model import ModelConfig, ModelParams
from .training import TrainConfig, TrainResult, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "Dataset",
    "LossBreakdown",
    "MetricsReport",
    "ModelConfig",
    "ModelParams",
    "Tape",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "compute_report",
    "evaluate",
    "total_objective",
    "train",
    "__version__",
]
