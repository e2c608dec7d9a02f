"""AdamW with decoupled weight decay and linear warmup.

Operates on (name, array) pairs so the same code drives full models and
scalar reference trajectories. Steps are 1-based: the first call uses
step index 1, which makes the bias corrections 1 - beta^1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError

__all__ = ["AdamWState", "adamw_step", "init_adamw_state", "lr_at"]


@dataclass
class AdamWState:
    """First/second moment accumulators keyed by parameter name."""

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adamw_state(named_params) -> AdamWState:
    state = AdamWState()
    for name, array in named_params:
        state.m[name] = np.zeros_like(array)
        state.v[name] = np.zeros_like(array)
    return state


def lr_at(step: int, learning_rate: float, warmup_steps: int) -> float:
    """Linear warmup to the base rate, then constant; step is 1-based."""
    if step < 1:
        raise ValidationError(f"step index is 1-based, got {step}")
    if warmup_steps > 0:
        return learning_rate * min(1.0, step / warmup_steps)
    return learning_rate


def adamw_step(
    named_params,
    named_grads,
    state: AdamWState,
    *,
    learning_rate: float = 1e-3,
    weight_decay: float = 0.05,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
    warmup_steps: int = 100,
) -> AdamWState:
    """One in-place update over matching (name, array) sequences.

    Decay is decoupled and multiplicative (w *= 1 - lr*wd) and applies
    uniformly to every array. Raises NumericalError naming the first
    parameter block whose gradient is non-finite.
    """
    step = state.step + 1
    rate = lr_at(step, learning_rate, warmup_steps)
    for (name, param), (grad_name, grad) in zip(named_params, named_grads):
        if name != grad_name:
            raise ValidationError(
                f"parameter/gradient order mismatch: {name} vs {grad_name}"
            )
        if not np.all(np.isfinite(grad)):
            raise NumericalError(
                f"non-finite gradient in {name} at step {step}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        if weight_decay != 0.0:
            param *= 1.0 - rate * weight_decay
        param -= rate * m_hat / (np.sqrt(v_hat) + epsilon)
    state.step = step
    return state
