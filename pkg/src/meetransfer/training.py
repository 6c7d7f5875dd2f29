"""Optimizers, the training loop, and MEE fine-tuning / linear probing.

The two transfer procedures follow the same recipe:

1. start from the source model (bias cleared),
2. pick the MEE bandwidth once with the median rule on the source
   model's residuals over the target training set,
3. run gradient steps on the entropy (all parameters, or the head only
   when probing),
4. set the output bias to the mean residual of the trained model.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .kernels import DegenerateBandwidthError, median_rule
from .losses import MEE, Loss
from .models import MlpConfig, Model, build_model
from .synthdata import Dataset

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or parameter."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 128
    learning_rate: float = 1e-4
    optimizer: Literal["adam", "sgd"] = "adam"
    validation_fraction: float = 0.0
    early_stopping: bool = False
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")

    @property
    def val_fraction(self) -> float:
        # 10% hold-out when early stopping is on and no fraction was given
        if self.early_stopping and self.validation_fraction == 0.0:
            return 0.1
        return self.validation_fraction


# -- optimizers -----------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One Adam update. Pure: returns ``(new_params, new_state)``.

    Parameters without an entry in ``grads`` are passed through untouched.
    """
    t = state.t + 1
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    new_params, m, v = dict(params), dict(state.m), dict(state.v)
    for k, g in grads.items():
        g = np.asarray(g, dtype=float)
        m_k = beta1 * m.get(k, 0.0) + (1.0 - beta1) * g
        v_k = beta2 * v.get(k, 0.0) + (1.0 - beta2) * (g * g)
        m[k], v[k] = m_k, v_k
        new_params[k] = params[k] - lr * (m_k / bc1) / (np.sqrt(v_k / bc2) + eps)
    return new_params, AdamState(t, m, v)


def sgd_step(params: dict, grads: dict, lr: float) -> dict:
    out = dict(params)
    for k, g in grads.items():
        out[k] = params[k] - lr * np.asarray(g, dtype=float)
    return out


# -- training loop --------------------------------------------------------


@dataclass
class FitResult:
    model: Model
    history: list[dict]
    sigma: float | None = None


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    if batch_size >= n:
        yield np.arange(n)
        return
    perm = rng.permutation(n)
    starts = list(range(0, n, batch_size))
    # kernel losses cannot use a single-sample batch; fold it into its neighbour
    if n - starts[-1] < 2 and len(starts) > 1:
        starts.pop()
    for i, s in enumerate(starts):
        end = starts[i + 1] if i + 1 < len(starts) else n
        yield perm[s:end]


def _grads(model: Model, loss: Loss, X, y, freeze_theta: bool):
    e = y - model.forward(X)
    value = loss.value(e, X)
    theta_g, w_g = model.backward(X, loss.grad(e, X), freeze_theta=freeze_theta)
    grads = {f"theta{i}": g for i, g in enumerate(theta_g)}
    grads["w"] = w_g
    return value, grads


def _split(n: int, frac: float, rng: np.random.Generator):
    if frac <= 0.0:
        return np.arange(n), np.arange(0)
    n_val = max(2, int(round(frac * n)))
    if n - n_val < 2:
        raise ValueError(f"dataset of {n} rows too small for a {frac:.0%} validation split")
    perm = rng.permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def fit(model: Model, data: Dataset, loss: Loss, cfg: TrainConfig, *,
        freeze_theta: bool = False) -> FitResult:
    """Train a copy of ``model``; the input model is left untouched.

    The per-epoch ``train_loss`` is the mean of the mini-batch losses seen
    during that epoch (the exact pre-step loss in full-batch mode).
    """
    model = model.copy()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xB47C]))
    tr_idx, val_idx = _split(len(data), cfg.val_fraction, rng)
    X, y = data.X[tr_idx], data.y[tr_idx]
    Xv, yv = data.X[val_idx], data.y[val_idx]

    params = model.params()
    state = AdamState()
    history: list[dict] = []
    best = (math.inf, None)
    for epoch in range(1, cfg.epochs + 1):
        batch_losses = []
        for idx in _batches(len(y), cfg.batch_size, rng):
            value, grads = _grads(model, loss, X[idx], y[idx], freeze_theta)
            if not math.isfinite(value):
                raise DivergenceError(f"non-finite {loss.name} loss at epoch {epoch}")
            batch_losses.append(value)
            if cfg.optimizer == "adam":
                params, state = adam_step(params, grads, state, cfg.learning_rate,
                                          cfg.beta1, cfg.beta2, cfg.eps)
            else:
                params = sgd_step(params, grads, cfg.learning_rate)
            model.load_params(params)
        if not np.all(np.isfinite(model.flat())):
            raise DivergenceError(f"non-finite parameters after epoch {epoch}")
        row = {"epoch": epoch, "train_loss": float(np.mean(batch_losses)), "val_loss": math.nan}
        if len(val_idx):
            row["val_loss"] = loss.value(yv - model.forward(Xv), Xv)
            if row["val_loss"] < best[0]:
                best = (row["val_loss"], model.copy())
        history.append(row)

    if cfg.early_stopping and best[1] is not None:
        model = best[1]
    return FitResult(model, history, getattr(loss, "sigma", None))


def pick_sigma(loss: Loss, residuals, *, floor: float | None = None) -> Loss:
    """Fill in an unset kernel bandwidth with the median rule."""
    if loss.needs_sigma and getattr(loss, "sigma", 0.0) is None:
        return loss.with_sigma(median_rule(residuals, floor=floor))
    return loss


def pretrain(source: Dataset, loss: Loss, cfg: TrainConfig, model: Model | None = None, *,
             kind: str = "linear", mlp: MlpConfig | None = None,
             bias_correction: bool | None = None) -> FitResult:
    """Train a model from scratch (or from ``model``) on the source data.

    Translation-invariant losses get the mean-residual bias correction
    unless ``bias_correction`` says otherwise.
    """
    if model is None:
        model = build_model(kind, source.X.shape[1], seed=cfg.seed, mlp=mlp)
    if cfg.epochs == 0:
        return FitResult(model.copy(), [], getattr(loss, "sigma", None))
    loss = pick_sigma(loss, model.residuals(source.X, source.y))
    result = fit(model, source, loss, cfg)
    if loss.translation_invariant if bias_correction is None else bias_correction:
        m = result.model.set_bias(0.0)
        result.model = m.set_bias(compute_bias(m, source))
    return result


def compute_bias(model: Model, data: Dataset) -> float:
    if len(data) == 0:
        raise ValueError("cannot compute a bias on an empty dataset")
    return float(np.mean(data.y - model.forward(data.X)))


# -- transfer procedures --------------------------------------------------


@dataclass
class TransferResult:
    model: Model
    sigma_used: float | None
    train_history: list[dict]
    source_snapshot: np.ndarray
    degenerate: bool = False
    bias_applied: bool = True


def transfer(target: Dataset, source_model: Model, loss: Loss, cfg: TrainConfig, *,
             freeze_theta: bool = False, bias_correction: bool | None = None,
             sigma_floor: float | None = None) -> TransferResult:
    """Adapt ``source_model`` to ``target`` with any loss.

    With an MEE loss whose ``sigma`` is ``None`` the bandwidth comes from the
    median rule on the source model's target residuals. If those residuals
    are all equal (and no ``sigma_floor`` is given) no training happens: the
    source model is returned with only the bias corrected and
    ``degenerate=True``.
    """
    if source_model.d != target.X.shape[1]:
        raise ValueError(f"source model expects {source_model.d} inputs, target has {target.X.shape[1]}")
    snapshot = source_model.flat().copy()
    start = source_model.set_bias(0.0)
    if bias_correction is None:
        bias_correction = loss.translation_invariant

    try:
        loss = pick_sigma(loss, start.residuals(target.X, target.y), floor=sigma_floor)
    except DegenerateBandwidthError:
        log.warning("degenerate residuals on target data; returning bias-only correction")
        return TransferResult(start.set_bias(compute_bias(start, target)), None, [], snapshot,
                              degenerate=True)

    result = fit(start, target, loss, cfg, freeze_theta=freeze_theta)
    model = result.model.set_bias(0.0)
    if bias_correction:
        model = model.set_bias(compute_bias(model, target))
    return TransferResult(model, getattr(loss, "sigma", None), result.history, snapshot,
                          bias_applied=bias_correction)


def finetune_mee(target: Dataset, source_model: Model, cfg: TrainConfig, *,
                 estimator: str = "matrix", sigma_floor: float | None = None) -> TransferResult:
    """Fine-tune every parameter on the error entropy of the target residuals."""
    return transfer(target, source_model, MEE(sigma=None, estimator=estimator), cfg,
                    freeze_theta=False, bias_correction=True, sigma_floor=sigma_floor)


def linear_probe_mee(target: Dataset, source_model: Model, cfg: TrainConfig, *,
                     estimator: str = "matrix", sigma_floor: float | None = None) -> TransferResult:
    """Retrain only the linear head on frozen source features."""
    return transfer(target, source_model, MEE(sigma=None, estimator=estimator), cfg,
                    freeze_theta=True, bias_correction=True, sigma_floor=sigma_floor)


def write_history_csv(history: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for row in history:
            w.writerow([row["epoch"], repr(row["train_loss"]), repr(row["val_loss"])])

