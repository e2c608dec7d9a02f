"""Synthetic sequence-classification tasks with deterministic pools.

Two task families:
  seq_sum_mod   label = (sum of token ids) mod modulus
  needle_index  label = position of the unique marker token (id vocab-1)

Each task owns fixed train and eval pools drawn from separate seed
streams, so the two sets are disjoint by construction and every batch
is a pure function of (task, stream, counter).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ValidationError
from .seeding import derive_rng

__all__ = [
    "TaskSpec",
    "generate_batch",
    "needle_label",
    "sum_mod_label",
    "task_pool",
]

_KINDS = ("seq_sum_mod", "needle_index")


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    vocab_size: int
    seq_len: int
    modulus: int | None = None
    train_size: int = 4096
    eval_size: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown task kind {self.kind!r}")
        if self.vocab_size < 2:
            raise ValidationError("vocab_size must be >= 2")
        if self.seq_len < 1:
            raise ValidationError("seq_len must be >= 1")
        if self.train_size < 1 or self.eval_size < 1:
            raise ValidationError("pool sizes must be >= 1")
        if self.kind == "seq_sum_mod":
            if self.modulus is None or self.modulus < 2:
                raise ValidationError("seq_sum_mod requires modulus >= 2")
        elif self.modulus is not None:
            raise ValidationError("needle_index does not take a modulus")

    @property
    def num_classes(self) -> int:
        if self.kind == "seq_sum_mod":
            return self.modulus
        return self.seq_len

    @property
    def marker_token(self) -> int:
        return self.vocab_size - 1


def sum_mod_label(tokens, modulus: int) -> int:
    return int(np.asarray(tokens).sum() % modulus)


def needle_label(tokens, marker: int) -> int:
    positions = np.flatnonzero(np.asarray(tokens) == marker)
    if positions.size != 1:
        raise ValidationError(
            f"expected exactly one marker token, found {positions.size}"
        )
    return int(positions[0])


def _build_pool(task: TaskSpec, stream: str, size: int):
    rng = derive_rng(task.seed, task.kind, stream)
    if task.kind == "seq_sum_mod":
        tokens = rng.integers(0, task.vocab_size, size=(size, task.seq_len))
        labels = tokens.sum(axis=1) % task.modulus
    else:
        # Fillers avoid the marker id; one marker is planted per row.
        tokens = rng.integers(0, task.vocab_size - 1, size=(size, task.seq_len))
        positions = rng.integers(0, task.seq_len, size=size)
        tokens[np.arange(size), positions] = task.marker_token
        labels = positions
    return tokens.astype(np.int64), labels.astype(np.int64)


@lru_cache(maxsize=64)
def _cached_pool(task: TaskSpec, stream: str):
    size = task.train_size if stream == "train" else task.eval_size
    tokens, labels = _build_pool(task, stream, size)
    tokens.setflags(write=False)
    labels.setflags(write=False)
    return tokens, labels


def task_pool(task: TaskSpec, stream: str):
    """The full (tokens, labels) pool for a stream (read-only views)."""
    if stream not in ("train", "eval"):
        raise ValidationError(f"stream must be 'train' or 'eval', got {stream!r}")
    return _cached_pool(task, stream)


def generate_batch(task: TaskSpec, batch_size: int, stream: str, counter: int):
    """Batch number `counter` from a stream, cycling over its pool."""
    if batch_size < 1:
        raise ValidationError("batch_size must be >= 1")
    if counter < 0:
        raise ValidationError("counter must be >= 0")
    tokens, labels = task_pool(task, stream)
    size = tokens.shape[0]
    idx = (counter * batch_size + np.arange(batch_size)) % size
    return tokens[idx].copy(), labels[idx].copy()
