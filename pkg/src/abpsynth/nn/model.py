"""Encoder-decoder sequence translation model built from the layer primitives.

Both the encoder and the decoder consume the same input segment (the
translation target has no token stream to feed back, so decoding is
non-autoregressive): per side, a 1-to-d_model dense lift, an additive
sinusoidal position table, then a stack of transformer blocks.  A
cross-attention block fuses the two stacks -- queries from the decoder
stack, keys/values from the encoder stack -- followed by two dense layers
that project back down to one output channel per position.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from . import layers


@dataclass
class TransformerConfig:
    seq_len: int = 250
    d_model: int = 64
    num_heads: int = 4
    key_dim_per_head: int = 64
    ff_dim: int = 64
    num_blocks_per_side: int = 3
    dropout: float = 0.1
    layernorm_epsilon: float = 1e-6

    def validate(self) -> None:
        for name in ("seq_len", "d_model", "num_heads", "key_dim_per_head",
                     "ff_dim", "num_blocks_per_side"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_model % 2 != 0:
            raise ValidationError(f"d_model must be even, got {self.d_model}")
        if not (0.0 <= self.dropout < 1.0):
            raise ValidationError(f"dropout must lie in [0, 1), got {self.dropout}")
        if not self.layernorm_epsilon > 0:
            raise ValidationError("layernorm_epsilon must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "seq_len", "d_model", "num_heads", "key_dim_per_head", "ff_dim",
            "num_blocks_per_side", "dropout", "layernorm_epsilon")}


@dataclass
class TransformerModel:
    config: TransformerConfig
    params: dict
    pe: np.ndarray = field(repr=False, default=None)


def build_model(config: TransformerConfig, seed: int = 0) -> TransformerModel:
    """Construct and initialize a model; deterministic for a given seed.

    Weights use fan-based uniform (Glorot) initialization, biases start at
    zero, layer-norm gains at one.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    c = config
    params = {
        "dense_e": layers.init_dense(rng, 1, c.d_model),
        "dense_d": layers.init_dense(rng, 1, c.d_model),
        "enc": [layers.init_block(rng, c.d_model, c.num_heads, c.key_dim_per_head, c.ff_dim)
                for _ in range(c.num_blocks_per_side)],
        "dec": [layers.init_block(rng, c.d_model, c.num_heads, c.key_dim_per_head, c.ff_dim)
                for _ in range(c.num_blocks_per_side)],
        "cross": layers.init_mha(rng, c.d_model, c.num_heads, c.key_dim_per_head),
        "dense1": layers.init_dense(rng, c.d_model, c.d_model),
        "dense2": layers.init_dense(rng, c.d_model, 1),
    }
    pe = layers.positional_encoding(c.seq_len, c.d_model)
    return TransformerModel(config=config, params=params, pe=pe)


# ---------------------------------------------------------------------------
# parameter bookkeeping


def flatten_params(params, prefix: str = "") -> list:
    """Depth-first (path, array) pairs in construction order."""
    out = []
    if isinstance(params, dict):
        for key, value in params.items():
            out.extend(flatten_params(value, f"{prefix}{key}."))
    elif isinstance(params, list):
        for i, value in enumerate(params):
            out.extend(flatten_params(value, f"{prefix}{i}."))
    else:
        out.append((prefix[:-1], params))
    return out


def map_params(params, fn):
    """Apply fn to every leaf array, preserving the tree structure."""
    if isinstance(params, dict):
        return {k: map_params(v, fn) for k, v in params.items()}
    if isinstance(params, list):
        return [map_params(v, fn) for v in params]
    return fn(params)


def _subtree_count(params) -> int:
    return sum(arr.size for _, arr in flatten_params(params))


def count_params(model: TransformerModel) -> list:
    """Per-layer parameter counts as (layer name, count) rows.

    Row naming and order follow the architecture summary: inputs, the two
    dense lifts, the position tables, the interleaved encoder/decoder
    blocks, the cross-attention fusion, and the two output dense layers.
    """
    p = model.params
    rows = [
        ("Input (e)", 0),
        ("Input (d)", 0),
        ("Dense (e)", _subtree_count(p["dense_e"])),
        ("Dense (d)", _subtree_count(p["dense_d"])),
        ("Pos. Enc. (e)", 0),
        ("Pos. Enc. (d)", 0),
    ]
    for i in range(model.config.num_blocks_per_side):
        rows.append((f"Tx Block {i + 1} (e)", _subtree_count(p["enc"][i])))
        rows.append((f"Tx Block {i + 1} (d)", _subtree_count(p["dec"][i])))
    rows.append(("MultiHead Attention", _subtree_count(p["cross"])))
    rows.append(("Dense 1", _subtree_count(p["dense1"])))
    rows.append(("Dense 2", _subtree_count(p["dense2"])))
    return rows


def total_params(model: TransformerModel) -> int:
    return sum(count for _, count in count_params(model))


# ---------------------------------------------------------------------------
# forward / loss / backward


def _as_batch(x: np.ndarray, seq_len: int):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != seq_len:
        raise ValidationError(
            f"expected input of length {seq_len}, got shape {np.asarray(x).shape}"
        )
    return batch, single


def _forward_cached(model: TransformerModel, batch: np.ndarray, mode: str, rng):
    c = model.config
    p = model.params
    cache: dict = {}
    streams = {}
    for side, dense_key, stack_key in (("e", "dense_e", "enc"), ("d", "dense_d", "dec")):
        lifted, dense_cache = layers.dense_forward(p[dense_key], batch[..., None])
        h = lifted + model.pe
        block_caches = []
        for blk_params in p[stack_key]:
            h, blk_cache = layers.block_forward(blk_params, h, c, mode, rng)
            block_caches.append(blk_cache)
        cache[dense_key] = dense_cache
        cache[stack_key] = block_caches
        streams[side] = h
    fused, cross_cache = layers.mha_forward(p["cross"], streams["d"], streams["e"],
                                            c.num_heads)
    cache["cross"] = cross_cache
    h1, cache["dense1"] = layers.dense_forward(p["dense1"], fused)
    out, cache["dense2"] = layers.dense_forward(p["dense2"], h1)
    return out[..., 0], cache


def forward(model: TransformerModel, x: np.ndarray, mode: str = "infer",
            rng=None) -> np.ndarray:
    """Synthesize the output segment(s); accepts (S,) or (B, S) input.

    Inference mode is a pure function of (model, x); train mode draws
    dropout masks from the supplied rng.
    """
    if mode not in ("infer", "train"):
        raise ValidationError(f"mode must be 'infer' or 'train', got {mode!r}")
    batch, single = _as_batch(x, model.config.seq_len)
    out, _ = _forward_cached(model, batch, mode, rng)
    return out[0] if single else out


def loss(pred: np.ndarray, target: np.ndarray, kind: str = "mae") -> float:
    """Mean absolute or mean squared error over all elements."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if kind == "mae":
        return float(np.mean(np.abs(pred - target)))
    if kind == "mse":
        return float(np.mean((pred - target) ** 2))
    raise ValidationError(f"unknown loss kind {kind!r}")


def _loss_grad(pred: np.ndarray, target: np.ndarray, kind: str) -> np.ndarray:
    diff = pred - target
    if kind == "mae":
        return np.sign(diff) / diff.size
    return 2.0 * diff / diff.size


def backward(model: TransformerModel, batch, kind: str = "mae", rng=None,
             loss_scale: float = 1.0):
    """Train-mode forward plus full reverse pass.

    ``batch`` is ``(x, target)`` with shapes (B, S).  Dropout masks drawn
    during the forward pass are reused on the way back.  Returns
    ``(loss_value, grads)`` where grads mirrors the parameter tree.
    """
    x, target = batch
    xb, _ = _as_batch(x, model.config.seq_len)
    tb, _ = _as_batch(target, model.config.seq_len)
    pred, cache = _forward_cached(model, xb, "train", rng)
    value = loss(pred, tb, kind) * loss_scale
    if not np.isfinite(value):
        raise ValidationError("loss is non-finite; check inputs and learning rate")

    c = model.config
    p = model.params
    grads: dict = {}
    d_pred = _loss_grad(pred, tb, kind) * loss_scale
    d_out = d_pred[..., None]
    d_h1, grads["dense2"] = layers.dense_backward(p["dense2"], d_out, cache["dense2"])
    d_fused, grads["dense1"] = layers.dense_backward(p["dense1"], d_h1, cache["dense1"])
    d_dec_top, d_enc_top, grads["cross"] = layers.mha_backward(
        p["cross"], d_fused, cache["cross"], c.num_heads)
    for side_grad, dense_key, stack_key in ((d_enc_top, "dense_e", "enc"),
                                            (d_dec_top, "dense_d", "dec")):
        d_h = side_grad
        stack_grads = [None] * len(p[stack_key])
        for i in reversed(range(len(p[stack_key]))):
            d_h, stack_grads[i] = layers.block_backward(
                p[stack_key][i], d_h, cache[stack_key][i], c)
        grads[stack_key] = stack_grads
        # the positional table is constant, so its add passes d_h through
        _, grads[dense_key] = layers.dense_backward(p[dense_key], d_h, cache[dense_key])
    return value, grads


# ---------------------------------------------------------------------------
# public single-segment wrappers for the layer ops


def multi_head_attention(x_q: np.ndarray, x_kv: np.ndarray, params: dict,
                         num_heads: int) -> np.ndarray:
    """Multi-head attention on single (n, d_model) sequences."""
    x_q = np.asarray(x_q, dtype=float)
    x_kv = np.asarray(x_kv, dtype=float)
    if x_q.ndim != 2 or x_kv.ndim != 2 or x_q.shape[1] != x_kv.shape[1]:
        raise ValidationError("multi_head_attention expects (n, d_model) inputs")
    if x_q.shape[1] != params["Wq"].shape[0]:
        raise ValidationError(
            f"input width {x_q.shape[1]} does not match projections "
            f"({params['Wq'].shape[0]})"
        )
    out, _ = layers.mha_forward(params, x_q[None], x_kv[None], num_heads)
    return out[0]


def transformer_block(x: np.ndarray, params: dict, cfg: TransformerConfig,
                      mode: str = "infer", rng=None) -> np.ndarray:
    """One block applied to a single (n, d_model) sequence."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValidationError("transformer_block expects an (n, d_model) input")
    out, _ = layers.block_forward(params, x[None], cfg, mode, rng)
    return out[0]


# ---------------------------------------------------------------------------
# persistence: little-endian float32 blob plus a JSON sidecar


def save_weights(model: TransformerModel, prefix) -> tuple:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    blob = bytearray()
    for path, arr in flatten_params(model.params):
        entries.append({"name": path, "shape": list(arr.shape), "offset": len(blob)})
        blob.extend(arr.astype("<f4").tobytes())
    bin_path = prefix.with_suffix(".bin")
    meta_path = prefix.with_suffix(".json")
    bin_path.write_bytes(bytes(blob))
    meta = {"config": model.config.to_dict(), "layers": entries,
            "total_bytes": len(blob)}
    meta_path.write_text(json.dumps(meta, sort_keys=True) + "\n")
    return bin_path, meta_path


def load_weights(prefix) -> TransformerModel:
    prefix = Path(prefix)
    meta_path = prefix if prefix.suffix == ".json" else prefix.with_suffix(".json")
    bin_path = meta_path.with_suffix(".bin")
    meta = json.loads(meta_path.read_text())
    blob = bin_path.read_bytes()
    if len(blob) != meta["total_bytes"]:
        raise ValidationError(
            f"{bin_path}: expected {meta['total_bytes']} bytes, found {len(blob)}"
        )
    config = TransformerConfig(**meta["config"])
    model = build_model(config, seed=0)
    arrays = dict(flatten_params(model.params))
    for entry in meta["layers"]:
        target = arrays[entry["name"]]
        shape = tuple(entry["shape"])
        if shape != target.shape:
            raise ValidationError(
                f"{meta_path}: layer {entry['name']} has shape {shape}, "
                f"expected {target.shape}"
            )
        count = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=entry["offset"])
        target[...] = values.reshape(shape).astype(float)
    return model
