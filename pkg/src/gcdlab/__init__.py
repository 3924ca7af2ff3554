"""gcdlab: a desk-scale laboratory for generalized category discovery.

Small encoder + prototype classifier trained with contrastive representation
losses, self-distillation pseudo-labeling, a batch-mean-entropy bonus, and
the stability extras (local entropy regularization with margins, dual-view
KL), evaluated with optimally matched clustering accuracy.  Everything is
numpy with hand-derived, finite-difference-certified gradients.
"""

from .config import (
    ABLATION_VARIANTS,
    ConfigError,
    CsvSpec,
    ExperimentConfig,
    SyntheticSpec,
    parse_config,
    parse_config_text,
    serialize_config,
)
from .evaluation import (
    EpochMetrics,
    count_known_high_conf,
    evaluate,
    hungarian_accuracy,
    kmeans,
)
from .harness import expand_runs, run_experiment
from .losses import EmaState, LossBreakdown, SelectionState
from .model import ModelParams, forward, init_params, load_checkpoint, save_checkpoint
from .report import emit_report
from .synthdata import (
    Batch,
    GcdDataset,
    GenerationError,
    augment_view,
    generate_dataset,
    load_csv_dataset,
    make_batches,
    save_csv_dataset,
)
from .trainer import (
    NonFiniteLossError,
    Toggles,
    TrainConfig,
    TrainState,
    cosine_lr,
    teacher_temperature,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ABLATION_VARIANTS", "Batch", "ConfigError", "CsvSpec", "EmaState",
    "EpochMetrics", "ExperimentConfig", "GcdDataset", "GenerationError",
    "LossBreakdown", "ModelParams", "NonFiniteLossError", "SelectionState",
    "SyntheticSpec", "Toggles", "TrainConfig", "TrainState", "augment_view",
    "cosine_lr", "count_known_high_conf", "emit_report", "evaluate",
    "expand_runs", "forward", "generate_dataset", "hungarian_accuracy",
    "init_params", "kmeans", "load_checkpoint", "load_csv_dataset",
    "make_batches", "parse_config", "parse_config_text", "run_experiment",
    "save_checkpoint", "save_csv_dataset", "serialize_config",
    "teacher_temperature", "train",
]
