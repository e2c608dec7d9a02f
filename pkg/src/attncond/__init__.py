"""Conditioning laboratory for multi-head attention.

Verifies numerically that concatenating independent Gaussian head
blocks drives the condition number of the concatenation toward 1, and
operationalizes the resulting depth-for-heads design trade with a toy
trainable transformer, a conditioning probe, a deterministic training
harness, and an exact parameter-count planner.
"""

__version__ = "0.1.0"

from .errors import DivergenceError, NumericalError, ValidationError
from .linalg import (
    DEFAULT_RANK_TOL,
    condition_number,
    numerical_rank,
    singular_values,
)
from .model import (
    ModelConfig,
    Parameters,
    init_parameters,
    load_parameters,
    loss_and_grads,
    model_forward,
    param_count,
    save_parameters,
)
from .planner import ArchSpec, count_params, tradeoff_table, vit_base_spec
from .probe import ConditioningReport, probe_batch, schedule_steps
from .randmat import (
    KappaStats,
    SweepSpec,
    asymptotic_kappa,
    full_rank_probability,
    head_concat_sweep,
)
from .seeding import derive_rng, derive_seed
from .tasks import TaskSpec, generate_batch, task_pool
from .training import (
    GridRow,
    RunResult,
    TrainConfig,
    depth_heads_grid,
    evaluate,
    train,
)

__all__ = [
    "ArchSpec",
    "ConditioningReport",
    "DEFAULT_RANK_TOL",
    "DivergenceError",
    "GridRow",
    "KappaStats",
    "ModelConfig",
    "NumericalError",
    "Parameters",
    "RunResult",
    "SweepSpec",
    "TaskSpec",
    "TrainConfig",
    "ValidationError",
    "asymptotic_kappa",
    "condition_number",
    "count_params",
    "depth_heads_grid",
    "derive_rng",
    "derive_seed",
    "evaluate",
    "full_rank_probability",
    "generate_batch",
    "head_concat_sweep",
    "init_parameters",
    "load_parameters",
    "loss_and_grads",
    "model_forward",
    "numerical_rank",
    "param_count",
    "probe_batch",
    "save_parameters",
    "schedule_steps",
    "singular_values",
    "task_pool",
    "tradeoff_table",
    "train",
    "vit_base_spec",
    "__version__",
]
