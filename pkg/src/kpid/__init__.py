"""Kernel-based system identification and mesh parameter estimation for
control-affine discrete-time systems."""

from .kernels import KernelKind, KernelSpec, control_embedding
from .operator import (
    FiniteRankModel,
    SnapshotDataset,
    drift_and_control,
    load_model,
    modes,
    predict_step,
    predict_trajectory,
    save_model,
    singular_functions,
    train,
)
from .paramid import (
    IdentificationResult,
    ParameterMesh,
    QueryDataset,
    augment,
    identify,
    mse_distance_table,
    query_mse,
)

__version__ = "0.1.0"
