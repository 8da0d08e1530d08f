"""Posterior-predictive sampling, forecast metrics and the persistence baseline."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, MetricError, ShapeError
from .posterior import MdnPosterior
from .tensor import no_grad
from .trainer import conditioning_inputs

logger = logging.getLogger(__name__)


@dataclass
class PredictiveFan:
    """``samples`` is ``(L, N, o)``; summaries are ``(N, o)``."""

    x: np.ndarray
    samples: np.ndarray
    mean: np.ndarray
    q025: np.ndarray
    q50: np.ndarray
    q975: np.ndarray

    @classmethod
    def from_samples(cls, x, samples) -> "PredictiveFan":
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim == 2:
            samples = samples[..., None]
        q = np.quantile(samples, [0.025, 0.5, 0.975], axis=0)
        return cls(np.asarray(x), samples, samples.mean(axis=0), q[0], q[1], q[2])

    @property
    def band_width(self) -> np.ndarray:
        return self.q975 - self.q025

    def to_csv(self, path) -> None:
        n_samples, n, n_out = self.samples.shape
        x = self.x.reshape(n, -1)
        x_cols = ["x"] if x.shape[1] == 1 else [f"x{i}" for i in range(x.shape[1])]
        header = x_cols + (["output"] if n_out > 1 else []) + [f"sample_{i}" for i in range(n_samples)]
        header += ["mean", "q025", "q50", "q975"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(n):
                for k in range(n_out):
                    row = [repr(float(v)) for v in x[i]] + ([k] if n_out > 1 else [])
                    row += [repr(float(v)) for v in self.samples[:, i, k]]
                    row += [repr(float(a[i, k])) for a in (self.mean, self.q025, self.q50, self.q975)]
                    w.writerow(row)


def sample_predictive(primary, posterior, x_test, n_samples: int = 30, rng=None, labels=None,
                      chunk: int = 256) -> PredictiveFan:
    """Draw ``n_samples`` parameter vectors and evaluate the primary model on ``x_test``.

    Unconditioned posteriors use the same ``n_samples`` draws for every test
    input, so each sample is one curve. Conditional posteriors also share
    their latent draw across inputs; the test inputs are processed in chunks
    with the generator state restored per chunk, which keeps the curves
    identical to a single full-batch evaluation. An MDN head draws fresh
    noise per input, so its stream simply continues from chunk to chunk.

    ``labels`` are extra conditioning columns: ``(N, k)`` shares them across
    samples, ``(n_samples, N, k)`` gives every sample its own set.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    x_test = np.asarray(x_test, dtype=np.float64)
    if x_test.ndim == 1:
        x_test = x_test[:, None]
    if labels is not None:
        labels = np.asarray(labels, dtype=np.float64)
        if labels.ndim == 3:
            if labels.shape[:2] != (n_samples, len(x_test)):
                raise ShapeError(f"per-sample labels must be ({n_samples}, {len(x_test)}, k), got {labels.shape}")
            fans = [sample_predictive(primary, posterior, x_test, 1, rng, labels[i], chunk).samples
                    for i in range(n_samples)]
            return PredictiveFan.from_samples(x_test, np.concatenate(fans, axis=0))
        labels = labels.reshape(len(x_test), -1)
    with no_grad():
        if not posterior.conditional:
            theta = posterior.sample(n_samples, rng)
            out = primary.forward(theta, x_test).data
        else:
            # keep each chunk's parameter tensor to a few million entries
            chunk = max(1, min(chunk, 4_000_000 // (n_samples * primary.layout.total_len)))
            shared = not isinstance(posterior, MdnPosterior)
            state = rng.bit_generator.state
            parts = []
            for lo in range(0, len(x_test), chunk):
                if shared:
                    rng.bit_generator.state = state
                sl = slice(lo, lo + chunk)
                cond = conditioning_inputs(posterior, x_test[sl], None if labels is None else labels[sl])
                theta = posterior.sample(n_samples, rng, cond)
                parts.append(primary.forward(theta, x_test[sl]).data)
            out = np.concatenate(parts, axis=1)
    return PredictiveFan.from_samples(x_test, out)


# -- metrics --------------------------------------------------------------
def _pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match target shape {target.shape}")
    return pred, target


def rmse(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def mape(pred, target) -> float:
    """Mean absolute percentage error; zero targets are dropped (and logged)."""
    pred, target = _pair(pred, target)
    keep = target != 0
    if not keep.any():
        raise MetricError("MAPE is undefined when every target is zero")
    dropped = int(keep.size - keep.sum())
    if dropped:
        logger.warning("MAPE: excluded %d zero targets", dropped)
    return float(np.mean(np.abs(pred[keep] - target[keep]) / np.abs(target[keep])) * 100.0)


def forecast_metrics(pred, target) -> dict:
    """Mean and spread of per-window RMSE and MAPE (windows along axis 0)."""
    pred, target = _pair(pred, target)
    if pred.ndim == 1:
        pred, target = pred[:, None], target[:, None]
    per_rmse = np.sqrt(np.mean((pred - target) ** 2, axis=1))
    keep = target != 0
    if not keep.any():
        raise MetricError("MAPE is undefined when every target is zero")
    ape = np.where(keep, np.abs(pred - target) / np.where(keep, np.abs(target), 1.0), np.nan) * 100.0
    rows = keep.any(axis=1)
    per_mape = np.nanmean(ape[rows], axis=1)
    return {
        "rmse": float(per_rmse.mean()),
        "rmse_std": float(per_rmse.std()),
        "mape": float(per_mape.mean()),
        "mape_std": float(per_mape.std()),
        "mape_excluded": int(keep.size - keep.sum()),
        "n_windows": int(len(pred)),
    }


def naive_forecast(window, horizon: int) -> np.ndarray:
    """Persistence: repeat the last observed value ``horizon`` times (works row-wise on 2-D input)."""
    window = np.asarray(window, dtype=np.float64)
    if window.shape[-1] < 1:
        raise ContractError("naive forecast needs at least one observation")
    if horizon < 1:
        raise ContractError("horizon must be positive")
    return np.repeat(window[..., -1:], horizon, axis=-1)


# -- multimodality --------------------------------------------------------
def detect_bimodality(samples, curve_values, band: float = 0.2, min_fraction: float = 0.1) -> str:
    """Classify the predictive samples at one input as ``"unimodal"`` or ``"bimodal"``.

    Bimodal iff at least ``min_fraction`` of the samples lie within ``band``
    of each reference curve value and the bin around the midpoint (half width
    ``min(band, gap / 4)``) holds fewer samples than either curve bin.
    """
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size == 0:
        raise ContractError("no samples")
    c1, c2 = (float(v) for v in curve_values)
    n1 = np.count_nonzero(np.abs(s - c1) <= band)
    n2 = np.count_nonzero(np.abs(s - c2) <= band)
    mid_half = min(band, abs(c2 - c1) / 4.0)
    n_mid = np.count_nonzero(np.abs(s - 0.5 * (c1 + c2)) <= mid_half)
    if n1 >= min_fraction * s.size and n2 >= min_fraction * s.size and n_mid < n1 and n_mid < n2:
        return "bimodal"
    return "unimodal"
