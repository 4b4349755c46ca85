"""Mini-batch Adam training loop, deterministic for a given seed."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError, ValidationError
from .model import TransformerModel, backward, flatten_params, forward, loss


@dataclass
class TrainConfig:
    epochs: int = 3
    batch_size: int = 128
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    loss: str = "mae"
    seed: int = 0
    max_steps: int | None = None   # optional hard cap across epochs

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be positive")
        if not self.learning_rate >= 0:
            raise ValidationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.loss not in ("mae", "mse"):
            raise ValidationError(f"loss must be 'mae' or 'mse', got {self.loss!r}")


@dataclass
class TrainHistory:
    step_losses: list = field(default_factory=list)
    epoch_train: list = field(default_factory=list)
    epoch_val: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"step_losses": self.step_losses, "epoch_train": self.epoch_train,
                "epoch_val": self.epoch_val}


class Adam:
    """First/second-moment adaptive updates with bias correction."""

    def __init__(self, params: dict, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self._m = {path: np.zeros_like(arr) for path, arr in flatten_params(params)}
        self._v = {path: np.zeros_like(arr) for path, arr in flatten_params(params)}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        grad_map = dict(flatten_params(grads))
        for path, arr in flatten_params(params):
            g = grad_map[path]
            m = self._m[path]
            v = self._v[path]
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            arr -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


def _stack_pairs(pairs):
    x = np.stack([np.asarray(p.ppg, dtype=float) for p in pairs])
    y = np.stack([np.asarray(p.abp, dtype=float) for p in pairs])
    return x, y


def train(model: TransformerModel, train_pairs, config: TrainConfig,
          val_pairs=None) -> TrainHistory:
    """Optimize the model in place; returns per-step and per-epoch losses.

    Shuffling, dropout, and updates all derive from ``config.seed``, so two
    runs from the same initial model produce identical histories and
    parameters.  A non-finite loss aborts with the offending step number.
    """
    config.validate()
    if not train_pairs:
        raise ValidationError("training set is empty")
    x_all, y_all = _stack_pairs(train_pairs)
    if x_all.shape[1] != model.config.seq_len:
        raise ValidationError(
            f"segment length {x_all.shape[1]} does not match model "
            f"seq_len={model.config.seq_len}"
        )
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.params, config.learning_rate, config.beta1,
                     config.beta2, config.epsilon)
    history = TrainHistory()
    n = len(train_pairs)
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            try:
                value, grads = backward(model, (x_all[idx], y_all[idx]),
                                        kind=config.loss, rng=rng)
            except ValidationError as exc:
                raise TrainingError(f"step {step}: {exc}") from exc
            optimizer.step(model.params, grads)
            step += 1
            history.step_losses.append(value)
            epoch_losses.append(value)
            if config.max_steps is not None and step >= config.max_steps:
                break
        history.epoch_train.append(float(np.mean(epoch_losses)))
        if val_pairs:
            xv, yv = _stack_pairs(val_pairs)
            history.epoch_val.append(loss(forward(model, xv, "infer"), yv, config.loss))
        if config.max_steps is not None and step >= config.max_steps:
            break
    return history
