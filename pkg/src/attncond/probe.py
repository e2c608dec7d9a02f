"""Condition-number probe for attention blocks inside a live model.

For each layer the probe collects the per-head outputs A_i (L x d) and
their concatenation A = [A_1 .. A_h] (L x h*d) from a traced forward
pass, computes kappa per sample, and averages over the batch. Samples
whose matrix is numerically rank deficient measure as +inf; they are
excluded from means and counted separately so a time series over
training steps stays finite wherever anything finite was measured. A
cell with no finite samples at all reports +inf, which keeps orderings
meaningful (a singular block is worse than any finite kappa).

Means are taken over sorted values so reports are bitwise invariant to
batch ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .linalg import DEFAULT_RANK_TOL, condition_number
from .model import ModelConfig, Parameters, forward_batch

__all__ = [
    "ConditioningReport",
    "LayerConditioning",
    "probe_batch",
    "schedule_steps",
]


@dataclass(frozen=True)
class LayerConditioning:
    """Batch-averaged kappas for one layer."""

    layer: int
    per_head_kappa: tuple[float, ...]
    concat_kappa: float


@dataclass(frozen=True)
class ConditioningReport:
    """Snapshot of attention conditioning at one training step.

    rank_deficient_heads counts (sample, layer, head) measurements that
    came back infinite; rank_deficient_concat counts (sample, layer)
    concatenation measurements that did. mean_concat_kappa_across_layers
    averages the finite per-layer concat kappas, +inf if none are finite
    and nan for a depth-0 model (nothing to measure).
    """

    step: int
    per_layer: tuple[LayerConditioning, ...]
    mean_concat_kappa_across_layers: float
    batch_size_measured: int
    rank_deficient_heads: int
    rank_deficient_concat: int


def _finite_mean(values: list[float]) -> tuple[float, int]:
    """(mean of finite entries, count of infinite entries).

    All-infinite populations report +inf: every measurement was worse
    than any finite kappa, and the mean should sort accordingly.
    """
    finite = sorted(v for v in values if np.isfinite(v))
    excluded = len(values) - len(finite)
    if not finite:
        return np.inf, excluded
    return float(np.mean(finite)), excluded


def probe_batch(
    params: Parameters,
    config: ModelConfig,
    batch,
    *,
    rank_tol: float = DEFAULT_RANK_TOL,
    include_projection: bool = False,
    step: int = 0,
) -> ConditioningReport:
    """Measure attention conditioning on a batch of token sequences.

    By default the concatenation is measured before the output
    projection; include_projection=True measures A @ W_O + b_O instead
    (per-head kappas are unaffected). Deterministic given its inputs.
    """
    batch = np.asarray(batch)
    if batch.ndim == 1:
        batch = batch[None]
    _, traces = forward_batch(batch, params, config, want_trace=True)
    size = batch.shape[0]

    per_layer = []
    deficient_heads = 0
    deficient_concat = 0
    layer_concat_means: list[float] = []
    for layer_index, trace in enumerate(traces or []):
        heads = trace["heads"]  # (B, h, L, d)
        target = trace["projected"] if include_projection else trace["concat"]
        head_means = []
        for head in range(config.num_heads):
            kappas = [
                condition_number(heads[b, head], rank_tol=rank_tol)
                for b in range(size)
            ]
            mean, excluded = _finite_mean(kappas)
            deficient_heads += excluded
            head_means.append(mean)
        concat_kappas = [
            condition_number(target[b], rank_tol=rank_tol) for b in range(size)
        ]
        concat_mean, excluded = _finite_mean(concat_kappas)
        deficient_concat += excluded
        layer_concat_means.append(concat_mean)
        per_layer.append(
            LayerConditioning(
                layer=layer_index,
                per_head_kappa=tuple(head_means),
                concat_kappa=concat_mean,
            )
        )

    if layer_concat_means:
        across, _ = _finite_mean(layer_concat_means)
    else:
        across = float("nan")
    return ConditioningReport(
        step=step,
        per_layer=tuple(per_layer),
        mean_concat_kappa_across_layers=across,
        batch_size_measured=size,
        rank_deficient_heads=deficient_heads,
        rank_deficient_concat=deficient_concat,
    )


def schedule_steps(total_steps: int, every_k_steps: int) -> tuple[int, ...]:
    """Probe steps: every multiple of k in [0, total_steps].

    Length is floor(total/k) + 1; the final step is included exactly
    when k divides total_steps.
    """
    if total_steps < 0:
        raise ValidationError(f"total_steps must be >= 0, got {total_steps}")
    if every_k_steps < 1:
        raise ValidationError(f"every_k_steps must be >= 1, got {every_k_steps}")
    return tuple(range(0, total_steps + 1, every_k_steps))
