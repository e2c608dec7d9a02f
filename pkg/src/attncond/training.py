"""Deterministic AdamW training on synthetic tasks, with conditioning
probes woven into the step loop, and the depth-by-heads grid runner.

Every run is a pure function of (train seed, task seed): the model init
seed and the data order both derive from them, so reruns are bitwise
identical and grid cells can share paired seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DivergenceError, NumericalError, ValidationError
from .model import (
    ModelConfig,
    Parameters,
    forward_batch,
    init_parameters,
    loss_and_grads,
    named_arrays,
    param_count,
)
from .optim import adamw_step, init_adamw_state, lr_at
from .planner import ArchSpec, count_params
from .probe import ConditioningReport, probe_batch, schedule_steps
from .seeding import derive_seed
from .tasks import TaskSpec, generate_batch, task_pool

__all__ = [
    "GridRow",
    "RunResult",
    "TrainConfig",
    "depth_heads_grid",
    "evaluate",
    "train",
]


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    batch_size: int = 64
    learning_rate: float = 1e-3
    weight_decay: float = 0.05
    warmup_steps: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    probe_every: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ValidationError(f"steps must be >= 0, got {self.steps}")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.warmup_steps < 0:
            raise ValidationError("warmup_steps must be >= 0")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be >= 0")
        if self.probe_every < 0:
            raise ValidationError("probe_every must be >= 0 (0 disables probing)")


@dataclass(frozen=True)
class RunResult:
    final_train_loss: float
    final_eval_accuracy: float
    loss_curve: tuple[float, ...]
    lr_curve: tuple[float, ...]
    conditioning: tuple[ConditioningReport, ...]
    param_count: int
    model_config: ModelConfig
    task: TaskSpec
    train_config: TrainConfig
    probe_metadata: dict


def _check_consistency(config: ModelConfig, task: TaskSpec) -> None:
    if config.vocab_size != task.vocab_size:
        raise ValidationError(
            f"model vocab_size {config.vocab_size} != task vocab_size {task.vocab_size}"
        )
    if config.seq_len != task.seq_len:
        raise ValidationError(
            f"model seq_len {config.seq_len} != task seq_len {task.seq_len}"
        )
    if config.num_classes != task.num_classes:
        raise ValidationError(
            f"model num_classes {config.num_classes} != task num_classes {task.num_classes}"
        )


def evaluate(params: Parameters, config: ModelConfig, task: TaskSpec,
             batch_size: int = 256) -> float:
    """Accuracy over the entire eval pool, each sample counted once."""
    tokens, labels = task_pool(task, "eval")
    correct = 0
    for start in range(0, tokens.shape[0], batch_size):
        chunk = tokens[start:start + batch_size]
        logits, _ = forward_batch(chunk, params, config)
        correct += int((logits.argmax(axis=1) == labels[start:start + batch_size]).sum())
    return correct / tokens.shape[0]


def train(model_config: ModelConfig, task: TaskSpec, tc: TrainConfig) -> RunResult:
    """Run AdamW for tc.steps minibatch steps; probe when configured.

    Raises DivergenceError (with the last finite step) if the training
    loss goes non-finite, and NumericalError if a gradient block does.
    """
    _check_consistency(model_config, task)
    params = init_parameters(model_config, seed=derive_seed(tc.seed, "model"))
    state = init_adamw_state(named_arrays(params))

    probe_steps: tuple[int, ...] = ()
    probe_tokens = None
    probe_metadata: dict = {"probing": False}
    if tc.probe_every >= 1:
        probe_steps = schedule_steps(tc.steps, tc.probe_every)
        probe_tokens, _ = generate_batch(task, tc.batch_size, "eval", 0)
        probe_metadata = {
            "probing": True,
            "stream": "eval",
            "counter": 0,
            "batch_size": int(probe_tokens.shape[0]),
        }
    probe_set = set(probe_steps)

    reports: list[ConditioningReport] = []
    if 0 in probe_set:
        reports.append(probe_batch(params, model_config, probe_tokens, step=0))

    losses: list[float] = []
    rates: list[float] = []
    for step in range(1, tc.steps + 1):
        tokens, labels = generate_batch(task, tc.batch_size, "train", step - 1)
        loss, grads = loss_and_grads(tokens, labels, params, model_config)
        if not math.isfinite(loss):
            raise DivergenceError(
                f"training loss became non-finite at step {step}",
                last_good_step=step - 1,
            )
        adamw_step(
            named_arrays(params), named_arrays(grads), state,
            learning_rate=tc.learning_rate, weight_decay=tc.weight_decay,
            beta1=tc.beta1, beta2=tc.beta2, epsilon=tc.epsilon,
            warmup_steps=tc.warmup_steps,
        )
        losses.append(loss)
        rates.append(lr_at(step, tc.learning_rate, tc.warmup_steps))
        if step in probe_set:
            reports.append(probe_batch(params, model_config, probe_tokens, step=step))

    accuracy = evaluate(params, model_config, task)
    return RunResult(
        final_train_loss=losses[-1] if losses else float("nan"),
        final_eval_accuracy=accuracy,
        loss_curve=tuple(losses),
        lr_curve=tuple(rates),
        conditioning=tuple(reports),
        param_count=param_count(params),
        model_config=model_config,
        task=task,
        train_config=tc,
        probe_metadata=probe_metadata,
    )


@dataclass(frozen=True)
class GridRow:
    depth: int
    heads: int
    params: int
    mean_acc: float
    std_acc: float
    final_mean_kappa: float
    accuracies: tuple[float, ...]
    kappas: tuple[float, ...]
    failed_runs: int


def _planner_spec(config: ModelConfig) -> ArchSpec:
    return ArchSpec(
        embed_dim=config.embed_dim, depth=config.depth,
        num_heads=config.num_heads, mlp_hidden=config.mlp_hidden,
        num_classes=config.num_classes, head_dim=config.head_dim,
        vocab_size=config.vocab_size, seq_len=config.seq_len,
        cls_token=False, qkv_bias=False, layernorm=config.use_layernorm,
    )


def _rep_seed(base_seed: int, rep: int) -> int:
    return base_seed if rep == 0 else derive_seed(base_seed, "rep", rep)


def depth_heads_grid(
    base_config: ModelConfig,
    depths,
    head_counts,
    task: TaskSpec,
    tc: TrainConfig,
    *,
    reps: int = 3,
    on_result=None,
) -> list[GridRow]:
    """Train reps seeds per (depth, heads) cell; head_dim stays fixed so
    embed_dim grows with heads. Failed runs are skipped and counted;
    rep 0 reuses tc.seed so the base cell reproduces a standalone call.
    on_result(depth, heads, rep, result), when given, is called after
    each successful rep so callers can persist per-run artifacts without
    retraining.
    """
    if reps < 1:
        raise ValidationError("reps must be >= 1")
    depths = sorted(set(int(v) for v in depths))
    head_counts = sorted(set(int(v) for v in head_counts))
    if not depths or not head_counts:
        raise ValidationError("depths and head_counts must be non-empty")
    rows = []
    for depth in depths:
        for heads in head_counts:
            config = replace(
                base_config, depth=depth, num_heads=heads,
                embed_dim=heads * base_config.head_dim,
            )
            accuracies: list[float] = []
            kappas: list[float] = []
            failed = 0
            for rep in range(reps):
                rep_tc = replace(tc, seed=_rep_seed(tc.seed, rep))
                try:
                    result = train(config, task, rep_tc)
                except NumericalError:
                    failed += 1
                    continue
                accuracies.append(result.final_eval_accuracy)
                if result.conditioning:
                    kappas.append(
                        result.conditioning[-1].mean_concat_kappa_across_layers
                    )
                if on_result is not None:
                    on_result(depth, heads, rep, result)
            mean_acc = float(np.mean(accuracies)) if accuracies else float("nan")
            std_acc = float(np.std(accuracies)) if accuracies else float("nan")
            final_kappa = float(np.mean(kappas)) if kappas else float("nan")
            rows.append(GridRow(
                depth=depth, heads=heads,
                params=count_params(_planner_spec(config)).total,
                mean_acc=mean_acc, std_acc=std_acc,
                final_mean_kappa=final_kappa,
                accuracies=tuple(accuracies), kappas=tuple(kappas),
                failed_runs=failed,
            ))
    return rows
