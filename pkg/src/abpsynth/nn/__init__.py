"""From-scratch tensor ops, the encoder-decoder model, training, and checks."""

from .gradcheck import grad_check, reduced_config
from .layers import positional_encoding, scaled_dot_attention
from .model import (
    TransformerConfig,
    TransformerModel,
    backward,
    build_model,
    count_params,
    forward,
    load_weights,
    loss,
    multi_head_attention,
    save_weights,
    total_params,
    transformer_block,
)
from .train import Adam, TrainConfig, TrainHistory, train

__all__ = [
    "Adam",
    "TrainConfig",
    "TrainHistory",
    "TransformerConfig",
    "TransformerModel",
    "backward",
    "build_model",
    "count_params",
    "forward",
    "grad_check",
    "load_weights",
    "loss",
    "multi_head_attention",
    "positional_encoding",
    "reduced_config",
    "save_weights",
    "scaled_dot_attention",
    "total_params",
    "train",
    "transformer_block",
]
