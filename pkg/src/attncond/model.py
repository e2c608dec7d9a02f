"""From-scratch toy transformer in float64 numpy with exact backprop.

The block computes Y = X + proj(concat_heads(attn(LN1(X)))) followed by
X_out = Y + MLP(LN2(Y)); per head, attn is softmax(q k^T) v applied
row-wise, optionally scaled by 1/sqrt(d) inside the softmax, with q, k,
v produced by per-head D x d projections. Pre-norm placement and the
softmax scale are toggleable so both the bare composition and the
standard practical form are testable. Classification mean-pools tokens
after an optional final norm.

Forward and backward are batched over sequences; the backward pass is
hand-derived (softmax, residuals, layernorm, GELU, pooling, embedding
scatter) and checked against central finite differences in the tests.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np
from scipy.special import erf

from .errors import ValidationError

__all__ = [
    "ForwardTrace",
    "LayerParameters",
    "LayerTrace",
    "ModelConfig",
    "Parameters",
    "attention_head_forward",
    "backward",
    "block_forward",
    "forward_batch",
    "init_parameters",
    "load_parameters",
    "loss_and_grads",
    "model_forward",
    "named_arrays",
    "param_count",
    "save_parameters",
]

_LN_EPS = 1e-6
_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
_MAGIC = b"ATCN"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Complete description of a toy encoder; embed_dim must be h*d."""

    depth: int
    num_heads: int
    head_dim: int
    embed_dim: int
    mlp_ratio: float
    vocab_size: int
    seq_len: int
    num_classes: int
    causal: bool = False
    use_layernorm: bool = True
    attn_scale: bool = True

    def __post_init__(self):
        dims = (self.num_heads, self.head_dim, self.embed_dim,
                self.vocab_size, self.seq_len, self.num_classes)
        if min(dims) < 1:
            raise ValidationError("all model dimensions must be >= 1")
        if self.depth < 0:
            raise ValidationError("depth must be >= 0")
        if self.embed_dim != self.num_heads * self.head_dim:
            raise ValidationError(
                f"embed_dim {self.embed_dim} != num_heads {self.num_heads}"
                f" * head_dim {self.head_dim}"
            )
        if not self.mlp_ratio > 0:
            raise ValidationError("mlp_ratio must be positive")
        if self.mlp_hidden < 1:
            raise ValidationError("mlp_ratio too small: hidden width rounds to 0")

    @property
    def mlp_hidden(self) -> int:
        return int(round(self.mlp_ratio * self.embed_dim))


@dataclass
class LayerParameters:
    """One block; wq/wk/wv are stored per head as (h, D, d)."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    ln1_gain: np.ndarray | None = None
    ln1_bias: np.ndarray | None = None
    ln2_gain: np.ndarray | None = None
    ln2_bias: np.ndarray | None = None


@dataclass
class Parameters:
    token_embed: np.ndarray
    pos_embed: np.ndarray
    layers: list[LayerParameters] = field(default_factory=list)
    final_gain: np.ndarray | None = None
    final_bias: np.ndarray | None = None
    head_w: np.ndarray | None = None
    head_b: np.ndarray | None = None


@dataclass(frozen=True)
class LayerTrace:
    """Per-layer record: row-stochastic weights, head outputs, concat."""

    attn_weights: np.ndarray  # (h, L, L)
    head_outputs: np.ndarray  # (h, L, d)
    concat: np.ndarray        # (L, h*d)
    projected: np.ndarray     # (L, D), after the output projection


@dataclass(frozen=True)
class ForwardTrace:
    layers: tuple[LayerTrace, ...]
    logits: np.ndarray


def _trunc_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Gaussian with values beyond 3 sigma redrawn, then scaled by std."""
    x = rng.standard_normal(shape)
    while True:
        bad = np.abs(x) > 3.0
        count = int(bad.sum())
        if count == 0:
            break
        x[bad] = rng.standard_normal(count)
    return x * std


def init_parameters(config: ModelConfig, seed: int) -> Parameters:
    """Deterministic init: projections ~ N(0, 1/D) truncated at 3 sigma,
    embeddings ~ N(0, 1) truncated, biases 0, norm gains 1."""
    rng = np.random.default_rng(seed)
    D, d, h = config.embed_dim, config.head_dim, config.num_heads
    hidden = config.mlp_hidden
    proj_std = 1.0 / np.sqrt(D)
    params = Parameters(
        token_embed=_trunc_normal(rng, (config.vocab_size, D), 1.0),
        pos_embed=_trunc_normal(rng, (config.seq_len, D), 1.0),
    )
    for _ in range(config.depth):
        layer = LayerParameters(
            wq=_trunc_normal(rng, (h, D, d), proj_std),
            wk=_trunc_normal(rng, (h, D, d), proj_std),
            wv=_trunc_normal(rng, (h, D, d), proj_std),
            wo=_trunc_normal(rng, (D, D), proj_std),
            bo=np.zeros(D),
            w1=_trunc_normal(rng, (D, hidden), proj_std),
            b1=np.zeros(hidden),
            w2=_trunc_normal(rng, (hidden, D), proj_std),
            b2=np.zeros(D),
        )
        if config.use_layernorm:
            layer.ln1_gain = np.ones(D)
            layer.ln1_bias = np.zeros(D)
            layer.ln2_gain = np.ones(D)
            layer.ln2_bias = np.zeros(D)
        params.layers.append(layer)
    if config.use_layernorm:
        params.final_gain = np.ones(D)
        params.final_bias = np.zeros(D)
    params.head_w = _trunc_normal(rng, (D, config.num_classes), proj_std)
    params.head_b = np.zeros(config.num_classes)
    return params


def named_arrays(params: Parameters) -> Iterator[tuple[str, np.ndarray]]:
    """(name, array) pairs in the canonical serialization order."""
    yield "token_embed", params.token_embed
    yield "pos_embed", params.pos_embed
    for i, layer in enumerate(params.layers):
        prefix = f"layers.{i}."
        for attr in ("wq", "wk", "wv", "wo", "bo", "w1", "b1", "w2", "b2",
                     "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias"):
            value = getattr(layer, attr)
            if value is not None:
                yield prefix + attr, value
    if params.final_gain is not None:
        yield "final_gain", params.final_gain
        yield "final_bias", params.final_bias
    yield "head_w", params.head_w
    yield "head_b", params.head_b


def param_count(params: Parameters) -> int:
    return sum(array.size for _, array in named_arrays(params))


def zeros_like_parameters(params: Parameters) -> Parameters:
    grads = Parameters(
        token_embed=np.zeros_like(params.token_embed),
        pos_embed=np.zeros_like(params.pos_embed),
    )
    for layer in params.layers:
        fields = {}
        for attr in ("wq", "wk", "wv", "wo", "bo", "w1", "b1", "w2", "b2",
                     "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias"):
            value = getattr(layer, attr)
            fields[attr] = None if value is None else np.zeros_like(value)
        grads.layers.append(LayerParameters(**fields))
    if params.final_gain is not None:
        grads.final_gain = np.zeros_like(params.final_gain)
        grads.final_bias = np.zeros_like(params.final_bias)
    grads.head_w = np.zeros_like(params.head_w)
    grads.head_b = np.zeros_like(params.head_b)
    return grads


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * np.exp(-0.5 * x * x) * _INV_SQRT_2PI


def _softmax_last(s: np.ndarray) -> np.ndarray:
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _layernorm_forward(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = centered * inv
    return gain * xhat + bias, xhat, inv


def _layernorm_backward(dy, gain, xhat, inv):
    axes = tuple(range(dy.ndim - 1))
    dgain = (dy * xhat).sum(axis=axes)
    dbias = dy.sum(axis=axes)
    dxhat = dy * gain
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgain, dbias


def _validate_tokens(tokens, config: ModelConfig) -> np.ndarray:
    arr = np.asarray(tokens)
    if arr.ndim != 2:
        raise ValidationError(f"token batch must be 2-D, got ndim={arr.ndim}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValidationError("tokens must be integers")
    batch, length = arr.shape
    if batch < 1 or length < 1:
        raise ValidationError(f"token batch must be non-empty, got shape {arr.shape}")
    if length > config.seq_len:
        raise ValidationError(f"sequence length {length} exceeds configured {config.seq_len}")
    if arr.min() < 0 or arr.max() >= config.vocab_size:
        raise ValidationError(
            f"token ids must lie in [0, {config.vocab_size}), "
            f"got range [{arr.min()}, {arr.max()}]"
        )
    return arr.astype(np.int64, copy=False)


def _attention(xn, layer: LayerParameters, config: ModelConfig):
    """Batched heads: xn (B, L, D) -> (weights, head outs, concat, projected)."""
    length = xn.shape[1]
    xb = xn[:, None]                       # (B, 1, L, D) broadcast over heads
    q = np.matmul(xb, layer.wq)            # (B, h, L, d)
    k = np.matmul(xb, layer.wk)
    v = np.matmul(xb, layer.wv)
    scores = np.matmul(q, k.transpose(0, 1, 3, 2))
    alpha = 1.0 / np.sqrt(config.head_dim) if config.attn_scale else 1.0
    if config.attn_scale:
        scores = scores * alpha
    if config.causal:
        mask = np.triu(np.ones((length, length), dtype=bool), k=1)
        scores = np.where(mask, -np.inf, scores)
    weights = _softmax_last(scores)        # (B, h, L, L)
    heads = np.matmul(weights, v)          # (B, h, L, d)
    batch = xn.shape[0]
    concat = np.ascontiguousarray(heads.transpose(0, 2, 1, 3)).reshape(
        batch, length, config.embed_dim
    )
    projected = concat @ layer.wo + layer.bo
    return q, k, v, weights, heads, concat, projected, alpha


def _forward(tokens, params: Parameters, config: ModelConfig,
             want_trace: bool = False, want_cache: bool = False):
    tokens = _validate_tokens(tokens, config)
    length = tokens.shape[1]
    x = params.token_embed[tokens] + params.pos_embed[:length][None]
    traces = [] if want_trace else None
    caches = [] if want_cache else None
    embed_x = x
    for layer in params.layers:
        if config.use_layernorm:
            xn1, xhat1, inv1 = _layernorm_forward(x, layer.ln1_gain, layer.ln1_bias)
        else:
            xn1, xhat1, inv1 = x, None, None
        q, k, v, weights, heads, concat, projected, alpha = _attention(xn1, layer, config)
        y = x + projected
        if config.use_layernorm:
            xn2, xhat2, inv2 = _layernorm_forward(y, layer.ln2_gain, layer.ln2_bias)
        else:
            xn2, xhat2, inv2 = y, None, None
        hidden_pre = xn2 @ layer.w1 + layer.b1
        hidden_act = _gelu(hidden_pre)
        x_out = y + (hidden_act @ layer.w2 + layer.b2)
        if want_trace:
            traces.append({"weights": weights, "heads": heads,
                           "concat": concat, "projected": projected})
        if want_cache:
            caches.append({
                "x_in": x, "xn1": xn1, "xhat1": xhat1, "inv1": inv1,
                "q": q, "k": k, "v": v, "weights": weights, "concat": concat,
                "alpha": alpha, "y": y, "xn2": xn2, "xhat2": xhat2, "inv2": inv2,
                "hidden_pre": hidden_pre, "hidden_act": hidden_act,
            })
        x = x_out
    if config.use_layernorm:
        x_final, xhat_f, inv_f = _layernorm_forward(x, params.final_gain, params.final_bias)
    else:
        x_final, xhat_f, inv_f = x, None, None
    pooled = x_final.mean(axis=1)
    logits = pooled @ params.head_w + params.head_b
    if want_cache:
        final_cache = {
            "tokens": tokens, "embed_x": embed_x, "pre_final": x,
            "xhat_f": xhat_f, "inv_f": inv_f, "x_final": x_final, "pooled": pooled,
        }
        return logits, traces, caches, final_cache
    return logits, traces, None, None


def forward_batch(tokens, params: Parameters, config: ModelConfig,
                  want_trace: bool = False):
    """Logits (B, C) for a (B, L) token batch; optional per-layer trace.

    With want_trace, the second element is a list (one dict per layer)
    with keys weights (B, h, L, L), heads (B, h, L, d), concat (B, L, D),
    projected (B, L, D).
    """
    logits, traces, _, _ = _forward(tokens, params, config, want_trace=want_trace)
    return logits, traces


def model_forward(tokens, params: Parameters, config: ModelConfig):
    """Single-sequence forward: returns (logits (C,), ForwardTrace)."""
    arr = np.asarray(tokens)
    if arr.ndim != 1:
        raise ValidationError(f"tokens must be a 1-D sequence, got ndim={arr.ndim}")
    logits, traces, _, _ = _forward(arr[None], params, config, want_trace=True)
    layer_traces = tuple(
        LayerTrace(
            attn_weights=t["weights"][0],
            head_outputs=t["heads"][0],
            concat=t["concat"][0],
            projected=t["projected"][0],
        )
        for t in traces
    )
    return logits[0], ForwardTrace(layers=layer_traces, logits=logits[0])


def attention_head_forward(x, wq, wk, wv, config: ModelConfig):
    """One head on one sequence: returns (A_i = W @ v, W row-stochastic)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("x must be 2-D (tokens by embed_dim)")
    if x.shape[1] != wq.shape[0] or wq.shape != wk.shape or wq.shape != wv.shape:
        raise ValidationError(
            f"shape mismatch: x {x.shape}, wq {wq.shape}, wk {wk.shape}, wv {wv.shape}"
        )
    q = x @ wq
    k = x @ wk
    v = x @ wv
    scores = q @ k.T
    if config.attn_scale:
        scores = scores / np.sqrt(wq.shape[1])
    if config.causal:
        length = x.shape[0]
        mask = np.triu(np.ones((length, length), dtype=bool), k=1)
        scores = np.where(mask, -np.inf, scores)
    weights = _softmax_last(scores)
    return weights @ v, weights


def block_forward(x, layer: LayerParameters, config: ModelConfig) -> np.ndarray:
    """One block on one sequence (L, D) -> (L, D)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != config.embed_dim:
        raise ValidationError(
            f"x must be (tokens, {config.embed_dim}), got {x.shape}"
        )
    xb = x[None]
    if config.use_layernorm:
        xn1, _, _ = _layernorm_forward(xb, layer.ln1_gain, layer.ln1_bias)
    else:
        xn1 = xb
    *_, projected, _alpha = _attention(xn1, layer, config)
    y = xb + projected
    if config.use_layernorm:
        xn2, _, _ = _layernorm_forward(y, layer.ln2_gain, layer.ln2_bias)
    else:
        xn2 = y
    out = y + (_gelu(xn2 @ layer.w1 + layer.b1) @ layer.w2 + layer.b2)
    return out[0]


def _cross_entropy(logits: np.ndarray, labels: np.ndarray):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_norm
    batch = logits.shape[0]
    loss = -log_probs[np.arange(batch), labels].mean()
    dlogits = np.exp(log_probs)
    dlogits[np.arange(batch), labels] -= 1.0
    dlogits /= batch
    return float(loss), dlogits


def loss_and_grads(tokens, labels, params: Parameters, config: ModelConfig):
    """Mean cross-entropy over the batch and exact gradients for it."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValidationError("labels must be 1-D")
    if labels.min() < 0 or labels.max() >= config.num_classes:
        raise ValidationError(
            f"labels must lie in [0, {config.num_classes}), "
            f"got range [{labels.min()}, {labels.max()}]"
        )
    logits, _, caches, final = _forward(tokens, params, config, want_cache=True)
    if labels.shape[0] != logits.shape[0]:
        raise ValidationError("labels length must match token batch size")
    loss, dlogits = _cross_entropy(logits, labels.astype(np.int64, copy=False))
    grads = zeros_like_parameters(params)

    pooled = final["pooled"]
    grads.head_w[...] = pooled.T @ dlogits
    grads.head_b[...] = dlogits.sum(axis=0)
    dpooled = dlogits @ params.head_w.T
    length = final["x_final"].shape[1]
    dx = np.broadcast_to(dpooled[:, None, :] / length, final["x_final"].shape).copy()
    if config.use_layernorm:
        dx, dgain, dbias = _layernorm_backward(dx, params.final_gain,
                                               final["xhat_f"], final["inv_f"])
        grads.final_gain[...] = dgain
        grads.final_bias[...] = dbias

    for layer, glayer, cache in zip(reversed(params.layers),
                                    reversed(grads.layers),
                                    reversed(caches)):
        # MLP branch: x_out = y + gelu(xn2 @ w1 + b1) @ w2 + b2
        d_out = dx
        batch, length, D = d_out.shape
        hidden = layer.w1.shape[1]
        d_out_2d = d_out.reshape(-1, D)
        act_2d = cache["hidden_act"].reshape(-1, hidden)
        glayer.w2[...] = act_2d.T @ d_out_2d
        glayer.b2[...] = d_out_2d.sum(axis=0)
        dact = d_out_2d @ layer.w2.T
        dhidden = dact * _gelu_grad(cache["hidden_pre"]).reshape(-1, hidden)
        xn2_2d = cache["xn2"].reshape(-1, D)
        glayer.w1[...] = xn2_2d.T @ dhidden
        glayer.b1[...] = dhidden.sum(axis=0)
        dxn2 = (dhidden @ layer.w1.T).reshape(batch, length, D)
        if config.use_layernorm:
            dy_branch, dgain, dbias = _layernorm_backward(
                dxn2, layer.ln2_gain, cache["xhat2"], cache["inv2"])
            glayer.ln2_gain[...] = dgain
            glayer.ln2_bias[...] = dbias
        else:
            dy_branch = dxn2
        dy = d_out + dy_branch

        # Attention branch: y = x_in + concat @ wo + bo
        dy_2d = dy.reshape(-1, D)
        concat_2d = cache["concat"].reshape(-1, D)
        glayer.wo[...] = concat_2d.T @ dy_2d
        glayer.bo[...] = dy_2d.sum(axis=0)
        dconcat = (dy_2d @ layer.wo.T).reshape(batch, length, D)
        h, d = config.num_heads, config.head_dim
        dheads = dconcat.reshape(batch, length, h, d).transpose(0, 2, 1, 3)
        weights = cache["weights"]
        dweights = np.matmul(dheads, cache["v"].transpose(0, 1, 3, 2))
        dv = np.matmul(weights.transpose(0, 1, 3, 2), dheads)
        dscores = weights * (dweights - (dweights * weights).sum(axis=-1, keepdims=True))
        if cache["alpha"] != 1.0:
            dscores = dscores * cache["alpha"]
        dq = np.matmul(dscores, cache["k"])
        dk = np.matmul(dscores.transpose(0, 1, 3, 2), cache["q"])
        xn1_2d = cache["xn1"].reshape(-1, D)
        for name, dmat in (("wq", dq), ("wk", dk), ("wv", dv)):
            # (h, B*L, d) per head; accumulate X^T d for each head at once.
            stacked = np.ascontiguousarray(dmat.transpose(1, 0, 2, 3)).reshape(h, -1, d)
            getattr(glayer, name)[...] = np.matmul(xn1_2d.T, stacked)
        dxn1 = (
            np.matmul(dq, layer.wq.transpose(0, 2, 1))
            + np.matmul(dk, layer.wk.transpose(0, 2, 1))
            + np.matmul(dv, layer.wv.transpose(0, 2, 1))
        ).sum(axis=1)
        if config.use_layernorm:
            dx_norm, dgain, dbias = _layernorm_backward(
                dxn1, layer.ln1_gain, cache["xhat1"], cache["inv1"])
            glayer.ln1_gain[...] = dgain
            glayer.ln1_bias[...] = dbias
        else:
            dx_norm = dxn1
        dx = dy + dx_norm

    tokens_arr = final["tokens"]
    length = tokens_arr.shape[1]
    grads.pos_embed[:length] = dx.sum(axis=0)
    np.add.at(grads.token_embed, tokens_arr, dx)
    return loss, grads


def backward(tokens, label, params: Parameters, config: ModelConfig):
    """Single-sequence gradients: returns (grads, loss)."""
    arr = np.asarray(tokens)
    if arr.ndim != 1:
        raise ValidationError(f"tokens must be a 1-D sequence, got ndim={arr.ndim}")
    loss, grads = loss_and_grads(arr[None], np.asarray([label]), params, config)
    return grads, loss


def _config_to_json(config: ModelConfig) -> dict:
    return asdict(config)


def _config_from_json(payload: dict) -> ModelConfig:
    try:
        return ModelConfig(**payload)
    except TypeError as exc:
        raise ValidationError(f"bad model config payload: {exc}") from None


def save_parameters(path, params: Parameters, config: ModelConfig) -> None:
    """Flat binary container: JSON header, then length-prefixed float64
    arrays in named_arrays order (embedding, positions, per-layer
    q/k/v/proj/mlp/norm blocks, final norm, head)."""
    header = json.dumps(
        {"format": _FORMAT_VERSION, "config": _config_to_json(config)},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for _, array in named_arrays(params):
            payload = np.ascontiguousarray(array, dtype="<f8").tobytes()
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)


def load_parameters(path) -> tuple[Parameters, ModelConfig]:
    """Inverse of save_parameters; validates framing and array sizes."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValidationError("not a parameter container (bad magic)")
    (header_len,) = struct.unpack_from("<I", blob, 4)
    offset = 8
    header = json.loads(blob[offset:offset + header_len].decode("utf-8"))
    offset += header_len
    if header.get("format") != _FORMAT_VERSION:
        raise ValidationError(f"unsupported container format {header.get('format')!r}")
    config = _config_from_json(header["config"])
    params = init_parameters(config, seed=0)
    for name, array in named_arrays(params):
        if offset + 8 > len(blob):
            raise ValidationError(f"truncated container before {name}")
        (nbytes,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        if nbytes != array.nbytes:
            raise ValidationError(
                f"array {name}: expected {array.nbytes} bytes, found {nbytes}"
            )
        if offset + nbytes > len(blob):
            raise ValidationError(f"truncated container inside {name}")
        array[...] = np.frombuffer(
            blob, dtype="<f8", count=array.size, offset=offset
        ).reshape(array.shape)
        offset += nbytes
    if offset != len(blob):
        raise ValidationError("trailing bytes after the last array")
    return params, config
