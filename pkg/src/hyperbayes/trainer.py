"""Minibatched gradient training of posterior models.

For every minibatch the posterior is sampled ``L`` times (conditional
generators see the minibatch inputs), the primary model is evaluated on each
sample, the likelihood scores the predictions and the Monte-Carlo predictive
loss is backpropagated into the posterior weights.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError, NumericError, TrainingDivergedError
from .likelihoods import LOSS_MODES, mc_predictive_loss
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


# -- optimisers -----------------------------------------------------------
@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_step(phi: np.ndarray, grad: np.ndarray, state: AdamState | None, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new parameters and state."""
    if state is None:
        state = AdamState(np.zeros_like(phi), np.zeros_like(phi))
    if state.m.shape != phi.shape or state.v.shape != phi.shape:
        raise ContractError(f"Adam moments {state.m.shape} do not match parameters {phi.shape}")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return phi - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m, v, t)


class Adam:
    def __init__(self, params: Sequence[Tensor], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state: list[AdamState | None] = [None] * len(self.params)

    def step(self) -> None:
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            p.data, self.state[i] = adam_step(p.data, p.grad, self.state[i], self.lr, self.beta1, self.beta2, self.eps)


class SGD:
    def __init__(self, params: Sequence[Tensor], lr=1e-2):
        self.params = list(params)
        self.lr = lr

    def step(self) -> None:
        for p in self.params:
            if p.grad is not None:
                p.data = p.data - self.lr * p.grad


# -- configuration --------------------------------------------------------
@dataclass
class EarlyStopping:
    enabled: bool = True
    val_fraction: float = 0.1
    patience: int = 20
    min_delta: float = 1e-4


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    mc_samples: int = 10
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss_mode: str = "neg_log_mean_prob"
    early_stopping: EarlyStopping = field(default_factory=EarlyStopping)
    clip_norm: float | None = None
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.early_stopping, dict):
            self.early_stopping = EarlyStopping(**self.early_stopping)
        for name in ("epochs", "batch_size", "mc_samples"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.early_stopping.val_fraction < 1.0:
            raise ContractError(f"val_fraction must lie in [0, 1), got {self.early_stopping.val_fraction}")
        if self.optimizer not in ("adam", "sgd"):
            raise ContractError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.loss_mode not in LOSS_MODES:
            raise ContractError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if not self.lr > 0:
            raise ContractError(f"lr must be positive, got {self.lr}")


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    checkpoint: list[np.ndarray] = field(default_factory=list)

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss", "seconds"])
            for i, (tr, va, s) in enumerate(zip(self.train_loss, self.val_loss, self.seconds)):
                w.writerow([i, repr(tr), repr(va), f"{s:.6f}"])


# -- data plumbing --------------------------------------------------------
def make_minibatches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle ``range(n)`` and cut it into contiguous slices of ``batch_size``."""
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def conditioning_inputs(posterior, x: np.ndarray, labels: np.ndarray | None = None):
    """Inputs handed to a conditional posterior: ``x``, or ``[x | labels]`` when its width asks for them."""
    if not getattr(posterior, "conditional", False):
        return None
    d = x.shape[1]
    if posterior.cond_dim == d:
        return x
    if labels is not None and posterior.cond_dim == d + labels.shape[1]:
        return np.hstack([x, labels])
    raise ContractError(
        f"posterior expects {posterior.cond_dim} conditioning columns but inputs have {d}"
        + ("" if labels is None else f" (+{labels.shape[1]} label columns)")
    )


def _labels2d(labels):
    if labels is None:
        return None
    labels = np.asarray(labels, dtype=np.float64)
    return labels.reshape(len(labels), -1)


def batch_loss(primary, posterior, likelihood, x, y, n_samples, rng, mode="neg_log_mean_prob", labels=None,
               dropout_rng=None) -> Tensor:
    """Monte-Carlo predictive loss of one minibatch."""
    theta = posterior.sample(n_samples, rng, conditioning_inputs(posterior, x, labels))
    y_hat = primary.forward(theta, x, rng=dropout_rng)
    return mc_predictive_loss(likelihood(y, y_hat, theta.values), mode)


def _clip(params, max_norm):
    total = np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None))
    if total > max_norm:
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * (max_norm / total)


def _evaluate(primary, posterior, likelihood, x, y, labels, cfg, rng) -> float:
    total, count = 0.0, 0
    with no_grad():
        for lo in range(0, len(x), cfg.batch_size):
            sl = slice(lo, lo + cfg.batch_size)
            lab = None if labels is None else labels[sl]
            loss = batch_loss(primary, posterior, likelihood, x[sl], y[sl], cfg.mc_samples, rng, cfg.loss_mode, lab)
            n = len(x[sl])
            total += loss.item() * n
            count += n
    return total / count


def train(primary, posterior, likelihood, data, cfg: TrainConfig) -> TrainReport:
    """Fit ``posterior`` so that its samples maximise the Monte-Carlo predictive of ``data``.

    ``data`` needs ``x`` (N, d) and ``y`` (N, o) arrays and may carry
    ``labels`` used as extra conditioning columns. With early stopping on, a
    random ``val_fraction`` of the rows is held out, monitored every epoch,
    and the best weights are restored at the end.
    """
    x = np.asarray(data.x, dtype=np.float64)
    y = np.asarray(data.y, dtype=np.float64)
    labels = _labels2d(getattr(data, "labels", None))
    if len(x) == 0:
        raise ContractError("training data is empty")
    if len(x) != len(y) or (labels is not None and len(labels) != len(x)):
        raise ContractError("x, y and labels must have the same number of rows")
    if x.ndim != 2 or y.ndim != 2:
        raise ContractError(f"x and y must be 2-D, got {x.shape} and {y.shape}")
    if x.shape[1] != primary.input_dim or y.shape[1] != primary.output_dim:
        raise ContractError(
            f"data widths ({x.shape[1]}, {y.shape[1]}) do not match primary ({primary.input_dim}, {primary.output_dim})"
        )

    split_rng, batch_rng, z_rng, val_rng, drop_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(5)
    )
    es = cfg.early_stopping
    train_idx = np.arange(len(x))
    val_idx = np.array([], dtype=int)
    if es.enabled and es.val_fraction > 0:
        n_val = max(1, int(round(es.val_fraction * len(x))))
        if n_val >= len(x):
            raise ContractError("validation split leaves no training data")
        perm = split_rng.permutation(len(x))
        val_idx, train_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    monitor = es.enabled and len(val_idx) > 0

    params = posterior.parameters()
    if cfg.optimizer == "adam":
        opt = Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    else:
        opt = SGD(params, cfg.lr)

    report = TrainReport()
    best = np.inf
    best_state = [p.data.copy() for p in params]
    since_best = 0
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        total, count = 0.0, 0
        for b, rows in enumerate(make_minibatches(len(train_idx), cfg.batch_size, batch_rng)):
            idx = train_idx[rows]
            for p in params:
                p.grad = None
            lab = None if labels is None else labels[idx]
            try:
                loss = batch_loss(primary, posterior, likelihood, x[idx], y[idx], cfg.mc_samples, z_rng,
                                  cfg.loss_mode, lab, dropout_rng=drop_rng)
            except NumericError as exc:
                raise TrainingDivergedError(epoch, b, float("nan")) from exc
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(epoch, b, value)
            loss.backward()
            if cfg.clip_norm:
                _clip(params, cfg.clip_norm)
            opt.step()
            total += value * len(idx)
            count += len(idx)
        report.train_loss.append(total / count)
        if monitor:
            val = _evaluate(primary, posterior, likelihood, x[val_idx], y[val_idx],
                            None if labels is None else labels[val_idx], cfg, val_rng)
            report.val_loss.append(val)
        else:
            report.val_loss.append(float("nan"))
        report.seconds.append(time.perf_counter() - start)

        if monitor:
            if val < best - es.min_delta:
                best = val
                report.best_epoch = epoch
                best_state = [p.data.copy() for p in params]
                since_best = 0
            else:
                since_best += 1
                if since_best > es.patience:
                    report.stopped_early = True
                    logger.info("early stop at epoch %d (best %d)", epoch, report.best_epoch)
                    break
        else:
            report.best_epoch = epoch

    if monitor:
        for p, saved in zip(params, best_state):
            p.data = saved.copy()
    report.checkpoint = [p.data.copy() for p in params]
    return report
