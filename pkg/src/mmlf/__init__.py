"""Multi-metric latent factor models for sparse rating matrices.

Six base models pair an embedding space (inner product or Euclidean
distance) with a loss (L1, L2 or smooth L1).  They train side by side with
per-entry SGD and are combined with weights that decay exponentially in
each model's cumulative absolute training error.
"""
from ._backend import NAME as BACKEND
from .data import (
    RatingEntry,
    RatingFormatError,
    RatingMatrix,
    SplitSpec,
    density,
    parse_ratings,
    split,
)
from .ensemble import (
    EnsembleState,
    TrainingHistory,
    accumulate,
    ensemble_predict,
    partial_loss,
    train_ensemble,
    weights,
)
from .metrics import EvalReport, evaluate_all, mae, rmse
from .model import (
    ALL_KINDS,
    BaseModelKind,
    CheckpointError,
    DivergenceError,
    FactorState,
    Hyperparams,
    init_state,
    objective,
    residual,
)
from .sgd import finite_diff_check, run_epoch, sgd_step

__version__ = "0.1.0"
