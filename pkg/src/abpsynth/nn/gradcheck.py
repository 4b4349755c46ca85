"""Central finite-difference verification of the analytic gradients."""

import numpy as np

from .model import (
    TransformerConfig,
    TransformerModel,
    _as_batch,
    _forward_cached,
    backward,
    flatten_params,
    map_params,
)


def reduced_config() -> TransformerConfig:
    """A small configuration suitable for exhaustive gradient checks."""
    return TransformerConfig(seq_len=8, d_model=8, num_heads=2, key_dim_per_head=8,
                             ff_dim=8, num_blocks_per_side=1, dropout=0.0)


def grad_check(model: TransformerModel, x: np.ndarray, target: np.ndarray,
               epsilon: float = 1e-5, loss_kind: str = "mse") -> float:
    """Max relative error between analytic and numeric gradients, all parameters.

    The analytic side is the double-precision backward pass.  The numeric
    probe re-evaluates the loss on an extended-precision copy of the
    parameters: the key-projection bias has a structurally zero gradient
    (a uniform key shift cancels inside the row softmax), so the probe's
    noise floor must sit well below the 1e-8 denominator floor for the
    comparison to be meaningful.  Requires dropout disabled so perturbed
    passes are deterministic.  The squared-error loss is the default
    because the absolute-error loss is non-differentiable where a residual
    crosses zero.
    """
    if model.config.dropout != 0.0:
        raise ValueError("grad_check requires a dropout-free model")
    xb, _ = _as_batch(x, model.config.seq_len)
    tb, _ = _as_batch(target, model.config.seq_len)
    _, grads = backward(model, (xb, tb), kind=loss_kind)
    grad_map = dict(flatten_params(grads))

    probe_params = map_params(model.params, lambda a: a.astype(np.longdouble))
    probe = TransformerModel(config=model.config, params=probe_params, pe=model.pe)

    def loss_scalar():
        pred, _ = _forward_cached(probe, xb, "train", None)
        diff = pred - tb
        if loss_kind == "mae":
            return np.mean(np.abs(diff))
        return np.mean(diff * diff)

    eps = np.longdouble(epsilon)
    worst = 0.0
    for path, arr in flatten_params(probe_params):
        analytic = grad_map[path].ravel()
        flat = arr.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_scalar()
            flat[i] = orig - eps
            down = loss_scalar()
            flat[i] = orig
            numeric = float((up - down) / (2.0 * eps))
            denom = max(abs(analytic[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst
