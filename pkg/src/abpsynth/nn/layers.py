"""Building blocks with hand-written forward/backward passes.

Everything runs in float64 numpy.  Batched tensors carry shape (B, S, D);
the attention core works on (B, H, S, D) with one head axis.  Each
``*_forward`` returns ``(output, cache)`` and the matching ``*_backward``
consumes the cache and returns input gradients plus parameter gradients.
"""

import numpy as np

from ..errors import ValidationError


def positional_encoding(seq_len: int, d_model: int) -> np.ndarray:
    """Sinusoidal position table: sin on even columns, cos on odd columns.

    Entry (pos, 2i) = sin(pos / 10000^(2i/d_model)) and entry (pos, 2i+1)
    uses the cosine of the same argument.
    """
    if seq_len < 1 or d_model < 1:
        raise ValidationError("seq_len and d_model must be positive")
    if d_model % 2 != 0:
        raise ValidationError(f"d_model must be even, got {d_model}")
    pos = np.arange(seq_len, dtype=float)[:, None]
    i = np.arange(0, d_model, 2, dtype=float)[None, :]
    angle = pos / np.power(10000.0, i / d_model)
    table = np.zeros((seq_len, d_model))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return table


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(d_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    return d_out * (x > 0.0)


def glorot_uniform(rng, d_in: int, d_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out))


# ---------------------------------------------------------------------------
# dense


def init_dense(rng, d_in: int, d_out: int) -> dict:
    return {"W": glorot_uniform(rng, d_in, d_out), "b": np.zeros(d_out)}


def dense_forward(params: dict, x: np.ndarray):
    return x @ params["W"] + params["b"], x


def dense_backward(params: dict, d_out: np.ndarray, cache):
    x = cache
    x2d = x.reshape(-1, x.shape[-1])
    d2d = d_out.reshape(-1, d_out.shape[-1])
    grads = {"W": x2d.T @ d2d, "b": d2d.sum(axis=0)}
    return d_out @ params["W"].T, grads


# ---------------------------------------------------------------------------
# layer norm (feature axis)


def layer_norm_forward(gain: np.ndarray, bias: np.ndarray, x: np.ndarray, eps: float):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return gain * xhat + bias, (xhat, inv, gain)


def layer_norm_backward(d_out: np.ndarray, cache):
    xhat, inv, gain = cache
    axes = tuple(range(d_out.ndim - 1))
    d_gain = (d_out * xhat).sum(axis=axes)
    d_bias = d_out.sum(axis=axes)
    d_xhat = d_out * gain
    d_x = inv * (d_xhat - d_xhat.mean(axis=-1, keepdims=True)
                 - xhat * (d_xhat * xhat).mean(axis=-1, keepdims=True))
    return d_x, d_gain, d_bias


# ---------------------------------------------------------------------------
# dropout (inverted scaling; mask shared between forward and backward)


def dropout_forward(x: np.ndarray, rate: float, rng):
    if rate <= 0.0:
        return x, None
    if rng is None:
        raise ValidationError("dropout with rate > 0 requires an rng")
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep).astype(float)
    return x * mask / keep, mask


def dropout_backward(d_out: np.ndarray, mask, rate: float) -> np.ndarray:
    if mask is None:
        return d_out
    return d_out * mask / (1.0 - rate)


# ---------------------------------------------------------------------------
# attention


def scaled_dot_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Single-head attention: softmax(q k^T / sqrt(d_k)) v for 2-D inputs."""
    q, k, v = (np.asarray(a, dtype=float) for a in (q, k, v))
    for name, arr in (("q", q), ("k", k), ("v", v)):
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"attention input {name} contains non-finite values")
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ValidationError(
            f"attention shape mismatch: q {q.shape}, k {k.shape}, v {v.shape}"
        )
    out, _ = _attention_forward(q[None, None], k[None, None], v[None, None])
    return out[0, 0]


def _attention_forward(q, k, v):
    scale = 1.0 / np.sqrt(q.shape[-1])
    weights = softmax(q @ k.swapaxes(-1, -2) * scale, axis=-1)
    return weights @ v, (q, k, v, weights)


def _attention_backward(d_out, cache):
    q, k, v, weights = cache
    scale = 1.0 / np.sqrt(q.shape[-1])
    d_weights = d_out @ v.swapaxes(-1, -2)
    d_v = weights.swapaxes(-1, -2) @ d_out
    d_scores = weights * (d_weights - (d_weights * weights).sum(axis=-1, keepdims=True))
    d_q = d_scores @ k * scale
    d_k = d_scores.swapaxes(-1, -2) @ q * scale
    return d_q, d_k, d_v


def init_mha(rng, d_model: int, num_heads: int, key_dim: int) -> dict:
    width = num_heads * key_dim
    return {
        "Wq": glorot_uniform(rng, d_model, width), "bq": np.zeros(width),
        "Wk": glorot_uniform(rng, d_model, width), "bk": np.zeros(width),
        "Wv": glorot_uniform(rng, d_model, width), "bv": np.zeros(width),
        "Wo": glorot_uniform(rng, width, d_model), "bo": np.zeros(d_model),
    }


def _split_heads(x: np.ndarray, num_heads: int) -> np.ndarray:
    b, s, width = x.shape
    return x.reshape(b, s, num_heads, width // num_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, s, d = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, s, h * d)


def mha_forward(params: dict, x_q: np.ndarray, x_kv: np.ndarray, num_heads: int):
    """Multi-head attention; every projection carries a bias."""
    q = _split_heads(x_q @ params["Wq"] + params["bq"], num_heads)
    k = _split_heads(x_kv @ params["Wk"] + params["bk"], num_heads)
    v = _split_heads(x_kv @ params["Wv"] + params["bv"], num_heads)
    heads, attn_cache = _attention_forward(q, k, v)
    concat = _merge_heads(heads)
    out = concat @ params["Wo"] + params["bo"]
    return out, (x_q, x_kv, attn_cache, concat)


def mha_backward(params: dict, d_out: np.ndarray, cache, num_heads: int):
    x_q, x_kv, attn_cache, concat = cache
    d2d = d_out.reshape(-1, d_out.shape[-1])
    grads = {"Wo": concat.reshape(-1, concat.shape[-1]).T @ d2d, "bo": d2d.sum(axis=0)}
    d_concat = d_out @ params["Wo"].T
    d_heads = _split_heads(d_concat, num_heads)
    d_q, d_k, d_v = _attention_backward(d_heads, attn_cache)
    d_q, d_k, d_v = (_merge_heads(a) for a in (d_q, d_k, d_v))
    xq2d = x_q.reshape(-1, x_q.shape[-1])
    xkv2d = x_kv.reshape(-1, x_kv.shape[-1])
    for name, proj_in, d_proj in (("q", xq2d, d_q), ("k", xkv2d, d_k), ("v", xkv2d, d_v)):
        d2 = d_proj.reshape(-1, d_proj.shape[-1])
        grads[f"W{name}"] = proj_in.T @ d2
        grads[f"b{name}"] = d2.sum(axis=0)
    d_x_q = d_q @ params["Wq"].T
    d_x_kv = d_k @ params["Wk"].T + d_v @ params["Wv"].T
    return d_x_q, d_x_kv, grads


# ---------------------------------------------------------------------------
# transformer block: self-attention and feed-forward sub-layers, each with
# dropout before the residual add, then layer norm


def init_block(rng, d_model: int, num_heads: int, key_dim: int, ff_dim: int) -> dict:
    return {
        "attn": init_mha(rng, d_model, num_heads, key_dim),
        "ln1_g": np.ones(d_model), "ln1_b": np.zeros(d_model),
        "ffn1": init_dense(rng, d_model, ff_dim),
        "ffn2": init_dense(rng, ff_dim, d_model),
        "ln2_g": np.ones(d_model), "ln2_b": np.zeros(d_model),
    }


def block_forward(params: dict, x: np.ndarray, cfg, mode: str, rng):
    rate = cfg.dropout if mode == "train" else 0.0
    attn_out, attn_cache = mha_forward(params["attn"], x, x, cfg.num_heads)
    attn_out, attn_mask = dropout_forward(attn_out, rate, rng)
    h1, ln1_cache = layer_norm_forward(params["ln1_g"], params["ln1_b"],
                                       x + attn_out, cfg.layernorm_epsilon)
    z1, ffn1_cache = dense_forward(params["ffn1"], h1)
    a1 = relu(z1)
    z2, ffn2_cache = dense_forward(params["ffn2"], a1)
    ff_out, ff_mask = dropout_forward(z2, rate, rng)
    out, ln2_cache = layer_norm_forward(params["ln2_g"], params["ln2_b"],
                                        h1 + ff_out, cfg.layernorm_epsilon)
    cache = (attn_cache, attn_mask, ln1_cache, ffn1_cache, z1, ffn2_cache,
             ff_mask, ln2_cache, rate)
    return out, cache


def block_backward(params: dict, d_out: np.ndarray, cache, cfg):
    (attn_cache, attn_mask, ln1_cache, ffn1_cache, z1, ffn2_cache,
     ff_mask, ln2_cache, rate) = cache
    grads: dict = {}
    d_res2, grads["ln2_g"], grads["ln2_b"] = layer_norm_backward(d_out, ln2_cache)
    d_ff = dropout_backward(d_res2, ff_mask, rate)
    d_a1, grads["ffn2"] = dense_backward(params["ffn2"], d_ff, ffn2_cache)
    d_z1 = relu_backward(d_a1, z1)
    d_h1_ffn, grads["ffn1"] = dense_backward(params["ffn1"], d_z1, ffn1_cache)
    d_h1 = d_res2 + d_h1_ffn
    d_res1, grads["ln1_g"], grads["ln1_b"] = layer_norm_backward(d_h1, ln1_cache)
    d_attn = dropout_backward(d_res1, attn_mask, rate)
    d_x_q, d_x_kv, grads["attn"] = mha_backward(params["attn"], d_attn,
                                                attn_cache, cfg.num_heads)
    return d_res1 + d_x_q + d_x_kv, grads
