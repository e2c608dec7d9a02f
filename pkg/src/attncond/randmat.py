"""Monte-Carlo study of condition numbers of concatenated Gaussian blocks.

The central claim under test: for A = [A_1, ..., A_h] with independent
Gaussian N x d blocks and D = h*d growing past N, kappa(A) concentrates
near (sqrt(D) + sqrt(N)) / (sqrt(D) - sqrt(N)), which tends to 1 as h
grows. This module samples such concatenations with deterministic
per-(h, trial) seeding and aggregates kappa statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .linalg import DEFAULT_RANK_TOL, condition_number, numerical_rank
from .seeding import derive_rng, derive_seed

__all__ = [
    "KappaStats",
    "SweepSpec",
    "asymptotic_kappa",
    "full_rank_probability",
    "head_concat_sweep",
    "sample_gaussian",
]


@dataclass(frozen=True)
class SweepSpec:
    """Grid for a head-concatenation sweep: fixed N and d, varying h."""

    seq_len: int
    head_dim: int
    head_counts: tuple[int, ...]
    trials: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "head_counts", tuple(int(h) for h in self.head_counts))
        if self.seq_len < 1 or self.head_dim < 1:
            raise ValidationError("seq_len and head_dim must be >= 1")
        if not self.head_counts:
            raise ValidationError("head_counts must be non-empty")
        if any(h < 1 for h in self.head_counts):
            raise ValidationError("head_counts must all be >= 1")
        if any(b <= a for a, b in zip(self.head_counts, self.head_counts[1:])):
            raise ValidationError("head_counts must be strictly ascending")
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")


@dataclass(frozen=True)
class KappaStats:
    """Per-h summary of sampled condition numbers.

    Statistics cover the finite kappas only; rank-deficient draws are
    counted in rank_deficient_count. With no finite draws the stats
    degenerate to nan. asymptotic_kappa is nan when D <= N, where the
    closed form is undefined. std is the population std (ddof=0).
    """

    h: int
    D: int
    trials: int
    mean_kappa: float
    std_kappa: float
    min_kappa: float
    max_kappa: float
    asymptotic_kappa: float
    rank_deficient_count: int


def sample_gaussian(rows: int, cols: int, seed: int) -> np.ndarray:
    """Seeded i.i.d. standard-normal matrix; identical seed, identical bits."""
    if rows < 1 or cols < 1:
        raise ValidationError(f"matrix dimensions must be >= 1, got {rows}x{cols}")
    if seed < 0:
        raise ValidationError("seed must be non-negative")
    return np.random.default_rng(seed).standard_normal((rows, cols))


def asymptotic_kappa(N: int, D: int) -> float:
    """Limit value (sqrt(D) + sqrt(N)) / (sqrt(D) - sqrt(N)).

    Defined only for D > N >= 1; decreases monotonically toward 1 as D
    grows at fixed N.
    """
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    if D <= N:
        raise ValidationError(f"asymptotic kappa requires D > N, got D={D}, N={N}")
    return (math.sqrt(D) + math.sqrt(N)) / (math.sqrt(D) - math.sqrt(N))


def _stats_for(h: int, spec: SweepSpec, kappas: list[float]) -> KappaStats:
    D = h * spec.head_dim
    finite = np.array([k for k in kappas if math.isfinite(k)])
    deficient = len(kappas) - finite.size
    if finite.size:
        mean, std = float(finite.mean()), float(finite.std())
        low, high = float(finite.min()), float(finite.max())
    else:
        mean = std = low = high = math.nan
    limit = asymptotic_kappa(spec.seq_len, D) if D > spec.seq_len else math.nan
    return KappaStats(
        h=h,
        D=D,
        trials=spec.trials,
        mean_kappa=mean,
        std_kappa=std,
        min_kappa=low,
        max_kappa=high,
        asymptotic_kappa=limit,
        rank_deficient_count=deficient,
    )


def head_concat_sweep(spec: SweepSpec, rank_tol: float = DEFAULT_RANK_TOL) -> list[KappaStats]:
    """Sample kappa([A_1, ..., A_h]) for each h in spec.head_counts.

    Each trial draws h independent Gaussian N x d blocks from a stream
    seeded by (spec.seed, h, trial), concatenates them to N x (h*d), and
    measures the condition number. Per-trial seeding makes the result
    independent of iteration order and worker count; kappas are
    aggregated from a buffer ordered by trial index.
    """
    results = []
    for h in spec.head_counts:
        kappas = []
        for trial in range(spec.trials):
            rng = derive_rng(spec.seed, h, trial)
            blocks = [rng.standard_normal((spec.seq_len, spec.head_dim)) for _ in range(h)]
            kappas.append(condition_number(np.hstack(blocks), rank_tol))
        results.append(_stats_for(h, spec, kappas))
    return results


def full_rank_probability(
    rows: int,
    cols: int,
    trials: int,
    seed: int,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> float:
    """Fraction of sampled Gaussian matrices with full numerical rank."""
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    full = min(rows, cols)
    hits = 0
    for trial in range(trials):
        draw = sample_gaussian(rows, cols, derive_seed(seed, "full-rank", trial))
        if numerical_rank(draw, rank_tol) == full:
            hits += 1
    return hits / trials
