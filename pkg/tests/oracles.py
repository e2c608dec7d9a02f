"""Independent straight-line oracles used to freeze expected values.

Everything here is written against the raw math, not against the
package's own code paths, so tests can cross-check the two routes.
Deliberately naive: explicit loops, no shared helpers from src/.
"""

from __future__ import annotations

import math

import numpy as np


def closed_form_kappa(n_rows: int, d_cols: int) -> float:
    """(sqrt(D) + sqrt(N)) / (sqrt(D) - sqrt(N)) for D > N."""
    assert d_cols > n_rows >= 1
    return (math.sqrt(d_cols) + math.sqrt(n_rows)) / (math.sqrt(d_cols) - math.sqrt(n_rows))


def straightline_attention(x, wq, wk, wv, scale: bool, causal: bool):
    """Single attention head, one row at a time, no vectorized softmax.

    Returns (head_output N x d, weights N x N).
    """
    x = np.asarray(x, dtype=float)
    q = x @ wq
    k = x @ wk
    v = x @ wv
    n = x.shape[0]
    d = wq.shape[1]
    weights = np.zeros((n, n))
    out = np.zeros((n, d))
    for row in range(n):
        logits = []
        for col in range(n):
            dot = 0.0
            for t in range(d):
                dot += q[row, t] * k[col, t]
            if scale:
                dot /= math.sqrt(d)
            if causal and col > row:
                dot = -math.inf
            logits.append(dot)
        top = max(logits)
        exps = [math.exp(val - top) for val in logits]
        total = sum(exps)
        for col in range(n):
            weights[row, col] = exps[col] / total
        for t in range(d):
            out[row, t] = sum(weights[row, col] * v[col, t] for col in range(n))
    return out, weights


def central_difference_grad(loss_fn, array: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function wrt one array."""
    grad = np.zeros_like(array)
    flat = array.ravel()
    gflat = grad.ravel()
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + eps
        hi = loss_fn()
        flat[idx] = orig - eps
        lo = loss_fn()
        flat[idx] = orig
        gflat[idx] = (hi - lo) / (2.0 * eps)
    return grad


def scalar_adamw_trajectory(w0, grads, lr, wd, beta1, beta2, eps, warmup):
    """Straight-line scalar AdamW with linear warmup, 1-based steps."""
    w = float(w0)
    m = 0.0
    v = 0.0
    history = []
    for step, g in enumerate(grads, start=1):
        lr_t = lr * min(1.0, step / warmup) if warmup > 0 else lr
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        w = w * (1.0 - lr_t * wd)
        w = w - lr_t * m_hat / (math.sqrt(v_hat) + eps)
        history.append(w)
    return history


def vit_like_param_count(
    tokens: int,
    embed_source: int,
    embed_bias: bool,
    embed_dim: int,
    depth: int,
    mlp_hidden: int,
    num_classes: int,
    cls_token: bool,
    qkv_bias: bool,
    layernorm: bool,
) -> int:
    """Sum every tensor of a standard pre-norm encoder, written longhand.

    `embed_source` is patch_size**2 * in_channels for image inputs or
    vocab_size for token inputs (embed_bias False for the lookup table).
    """
    total = embed_source * embed_dim + (embed_dim if embed_bias else 0)
    total += (tokens + (1 if cls_token else 0)) * embed_dim
    if cls_token:
        total += embed_dim
    for _ in range(depth):
        for _proj in ("q", "k", "v"):
            total += embed_dim * embed_dim
            if qkv_bias:
                total += embed_dim
        total += embed_dim * embed_dim + embed_dim
        total += embed_dim * mlp_hidden + mlp_hidden
        total += mlp_hidden * embed_dim + embed_dim
        if layernorm:
            total += 4 * embed_dim
    if layernorm:
        total += 2 * embed_dim
    total += embed_dim * num_classes + num_classes
    return total
