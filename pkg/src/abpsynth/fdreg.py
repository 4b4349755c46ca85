"""Coefficient-space regression from PPG spectra to ABP spectra.

Training stacks the truncated/zero-padded DCT vectors of the normalized
segments into design matrices and solves multi-output ridge in closed form,

    W = (X^T X + lambda I)^{-1} X^T Y,

via a Cholesky factorization of the regularized Gram matrix (never an
explicit inverse).  A radial-basis kernel variant provides the non-linear
option; its dual coefficients solve (K + lambda I) alpha = Y.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg as sla

from . import preprocess, spectral
from .errors import IllConditionedError, ValidationError

DEFAULT_LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3)


@dataclass
class RidgeModel:
    """A fitted coefficient-space regressor (linear or kernel-rbf)."""

    kind: str
    lambda_: float
    config: spectral.SpectralConfig
    weights: np.ndarray | None = None      # linear: (Q, Q)
    x_train: np.ndarray | None = None      # kernel: stored training inputs (n, Q)
    dual_coef: np.ndarray | None = None    # kernel: (n, Q)
    bandwidth: float | None = None

    def validate(self) -> None:
        if self.kind not in ("linear", "kernel-rbf"):
            raise ValidationError(f"unknown model kind {self.kind!r}")
        if self.lambda_ < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lambda_}")
        arrays = (self.weights,) if self.kind == "linear" else (self.x_train, self.dual_coef)
        for arr in arrays:
            if arr is None or not np.all(np.isfinite(arr)):
                raise ValidationError("model parameters must be present and finite")


@dataclass
class FdTrainReport:
    """Validation sweep over the regularization grid."""

    lambda_grid: list
    val_mae: list                      # one entry per grid point; None where the fit failed
    chosen_lambda: float
    errors: dict = field(default_factory=dict)  # grid point -> failure message

    def to_dict(self) -> dict:
        return {"lambda_grid": list(self.lambda_grid),
                "val_mae": list(self.val_mae),
                "chosen_lambda": self.chosen_lambda,
                "errors": {str(k): v for k, v in self.errors.items()}}


def _check_design(x: np.ndarray, y: np.ndarray, lam: float):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValidationError(f"design shapes disagree: X {x.shape}, Y {y.shape}")
    if x.shape[0] < 1:
        raise ValidationError("need at least one training row")
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("design matrices contain non-finite values")
    return x, y


def _spd_solve(gram: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    try:
        chol = sla.cho_factor(gram, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(f"{what} is singular; increase lambda") from exc
    return sla.cho_solve(chol, rhs, check_finite=False)


def fit_ridge(x: np.ndarray, y: np.ndarray, lam: float,
              config: spectral.SpectralConfig | None = None) -> RidgeModel:
    """Closed-form multi-output ridge: rows of X map to rows of Y."""
    x, y = _check_design(x, y, lam)
    q = x.shape[1]
    gram = x.T @ x + lam * np.eye(q)
    weights = _spd_solve(gram, x.T @ y, "X^T X + lambda I")
    config = config or spectral.SpectralConfig(q=q, q_x=q, q_y=q)
    return RidgeModel(kind="linear", lambda_=float(lam), config=config, weights=weights)


def rbf_kernel(a: np.ndarray, b: np.ndarray, bandwidth: float) -> np.ndarray:
    sq = (np.sum(a ** 2, axis=1)[:, None] + np.sum(b ** 2, axis=1)[None, :]
          - 2.0 * a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * bandwidth ** 2))


def median_bandwidth(x: np.ndarray, max_rows: int = 512) -> float:
    """Median pairwise distance heuristic (subsampled for large inputs)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] > max_rows:
        idx = np.linspace(0, x.shape[0] - 1, max_rows).astype(int)
        x = x[idx]
    sq = (np.sum(x ** 2, axis=1)[:, None] + np.sum(x ** 2, axis=1)[None, :]
          - 2.0 * x @ x.T)
    d = np.sqrt(np.maximum(sq[np.triu_indices(x.shape[0], k=1)], 0.0))
    med = float(np.median(d)) if d.size else 1.0
    return med if med > 0 else 1.0


def fit_kernel_ridge(x: np.ndarray, y: np.ndarray, lam: float,
                     bandwidth: float | None = None,
                     config: spectral.SpectralConfig | None = None) -> RidgeModel:
    """RBF kernel ridge; prediction is k(x, X_train)^T alpha."""
    x, y = _check_design(x, y, lam)
    if bandwidth is None:
        bandwidth = median_bandwidth(x)
    if not bandwidth > 0:
        raise ValidationError(f"bandwidth must be positive, got {bandwidth}")
    gram = rbf_kernel(x, x, bandwidth) + lam * np.eye(x.shape[0])
    dual = _spd_solve(gram, y, "K + lambda I")
    config = config or spectral.SpectralConfig(q=x.shape[1], q_x=x.shape[1], q_y=x.shape[1])
    return RidgeModel(kind="kernel-rbf", lambda_=float(lam), config=config,
                      x_train=x.copy(), dual_coef=dual, bandwidth=float(bandwidth))


def predict(model: RidgeModel, x: np.ndarray) -> np.ndarray:
    """Apply a fitted model to one coefficient vector or a stack of rows."""
    model.validate()
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    q = model.config.q
    if rows.shape[1] != q:
        raise ValidationError(f"expected {q}-dimensional inputs, got {rows.shape[1]}")
    if model.kind == "linear":
        out = rows @ model.weights
    else:
        out = rbf_kernel(rows, model.x_train, model.bandwidth) @ model.dual_coef
    return out[0] if single else out


def design_matrices(pairs, config: spectral.SpectralConfig):
    """Truncated/padded DCT rows for a list of segment pairs: (X, Y)."""
    config.validate()
    xs, ys = [], []
    for pair in pairs:
        cx = spectral.dct2(pair.ppg)
        cy = spectral.dct2(pair.abp)
        xs.append(spectral.truncate_pad(cx, config.q_x, config.q).coeffs)
        ys.append(spectral.truncate_pad(cy, config.q_y, config.q).coeffs)
    return np.stack(xs), np.stack(ys)


def synthesize_abp_fd(model: RidgeModel, ppg_segment: np.ndarray,
                      abp_stats=None) -> np.ndarray:
    """Full synthesis path: DCT, truncate/pad, regress, inverse DCT.

    With ``abp_stats`` supplied the output is denormalized to mmHg;
    otherwise it stays in normalized units.
    """
    ppg_segment = np.asarray(ppg_segment, dtype=float)
    cfg = model.config
    if len(ppg_segment) != cfg.q:
        raise ValidationError(
            f"segment length {len(ppg_segment)} does not match model Q={cfg.q}"
        )
    coeffs = spectral.truncate_pad(spectral.dct2(ppg_segment), cfg.q_x, cfg.q).coeffs
    wave = spectral.idct(predict(model, coeffs))
    if abp_stats is not None:
        wave = preprocess.denormalize(wave, abp_stats)
    return wave


def _validation_mae(model: RidgeModel, val_pairs, x_val: np.ndarray) -> float:
    # time-domain MAE in mmHg after inverse DCT and per-segment denormalization
    pred_waves = spectral.idct(predict(model, x_val))
    total, count = 0.0, 0
    for pred, pair in zip(pred_waves, val_pairs):
        ref = preprocess.denormalize(pair.abp, pair.abp_stats)
        hat = preprocess.denormalize(pred, pair.abp_stats)
        total += float(np.abs(hat - ref).sum())
        count += len(ref)
    return total / count


def sweep_lambda(train_pairs, val_pairs, grid=DEFAULT_LAMBDA_GRID,
                 config: spectral.SpectralConfig | None = None,
                 kind: str = "linear"):
    """Fit one model per grid point, pick the validation-MAE minimizer.

    Ties break toward the smaller lambda.  Per-point fit failures are
    recorded in the report and only fatal if every grid point fails.
    Returns ``(best_model, report)``.
    """
    grid = list(grid)
    if not grid:
        raise ValidationError("lambda grid must be non-empty")
    if any(g < 0 for g in grid):
        raise ValidationError("lambda grid entries must be >= 0")
    if not train_pairs or not val_pairs:
        raise ValidationError("sweep needs non-empty train and validation sets")
    config = config or spectral.SpectralConfig(q=len(train_pairs[0].ppg))
    x_train, y_train = design_matrices(train_pairs, config)
    x_val, _ = design_matrices(val_pairs, config)
    fit = fit_ridge if kind == "linear" else fit_kernel_ridge
    maes: list = []
    models: list = []
    errors: dict = {}
    for lam in grid:
        try:
            model = fit(x_train, y_train, lam, config=config)
            maes.append(_validation_mae(model, val_pairs, x_val))
            models.append(model)
        except (IllConditionedError, ValidationError) as exc:
            maes.append(None)
            models.append(None)
            errors[lam] = str(exc)
    candidates = [(mae, lam) for mae, lam in zip(maes, grid) if mae is not None]
    if not candidates:
        raise IllConditionedError(f"every grid point failed: {errors}")
    best_mae = min(mae for mae, _ in candidates)
    chosen = min(lam for mae, lam in candidates if mae == best_mae)
    report = FdTrainReport(lambda_grid=grid, val_mae=maes,
                           chosen_lambda=chosen, errors=errors)
    return models[grid.index(chosen)], report


# ---------------------------------------------------------------------------
# persistence


def save_model(model: RidgeModel, path) -> None:
    model.validate()
    doc = {
        "kind": model.kind,
        "lambda": model.lambda_,
        "q": model.config.q, "q_x": model.config.q_x, "q_y": model.config.q_y,
    }
    if model.kind == "linear":
        doc["weights"] = model.weights.ravel().tolist()
    else:
        doc["x_train"] = model.x_train.ravel().tolist()
        doc["n_train"] = model.x_train.shape[0]
        doc["dual_coef"] = model.dual_coef.ravel().tolist()
        doc["bandwidth"] = model.bandwidth
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_model(path) -> RidgeModel:
    doc = json.loads(Path(path).read_text())
    config = spectral.SpectralConfig(q=doc["q"], q_x=doc["q_x"], q_y=doc["q_y"])
    q = config.q
    if doc["kind"] == "linear":
        weights = np.array(doc["weights"], dtype=float)
        if weights.size != q * q:
            raise ValidationError(
                f"{path}: expected {q * q} weights, found {weights.size}"
            )
        model = RidgeModel(kind="linear", lambda_=doc["lambda"], config=config,
                           weights=weights.reshape(q, q))
    else:
        n = int(doc["n_train"])
        x_train = np.array(doc["x_train"], dtype=float)
        dual = np.array(doc["dual_coef"], dtype=float)
        if x_train.size != n * q or dual.size != n * q:
            raise ValidationError(f"{path}: kernel model arrays have wrong sizes")
        model = RidgeModel(kind="kernel-rbf", lambda_=doc["lambda"], config=config,
                           x_train=x_train.reshape(n, q), dual_coef=dual.reshape(n, q),
                           bandwidth=float(doc["bandwidth"]))
    model.validate()
    return model
