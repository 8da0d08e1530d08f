"""Likelihood evaluators and the Monte-Carlo posterior-predictive loss.

Predictions arrive as ``(L, B, o)`` tensors (sample, batch, output) and
targets as ``(B, o)``. Evaluators return log-likelihoods of shape ``(L, B)``;
:class:`SseL2Likelihood` scores the whole minibatch jointly and returns
``(L, 1)``.
"""

from __future__ import annotations

from math import log, pi

from .errors import ContractError, ShapeError
from .tensor import Tensor, absolute, logsumexp, square

LOSS_MODES = ("neg_log_mean_prob", "mean_prob", "neg_mean_log_prob")


def _prep(y, y_hat):
    y = y if isinstance(y, Tensor) else Tensor(y)
    y_hat = y_hat if isinstance(y_hat, Tensor) else Tensor(y_hat)
    if y_hat.shape[y_hat.ndim - y.ndim:] != y.shape:
        raise ShapeError(f"targets {y.shape} do not match predictions {y_hat.shape}")
    return y, y_hat


def gaussian_log_lik(y, y_hat, sigma: float) -> Tensor:
    """Independent Gaussian with known standard deviation, summed over outputs."""
    if not sigma > 0:
        raise ContractError(f"sigma must be positive, got {sigma}")
    y, y_hat = _prep(y, y_hat)
    const = -log(sigma) - 0.5 * log(2 * pi)
    resid = y_hat - y
    per_dim = square(resid) * (-0.5 / sigma**2) + const
    return per_dim.sum(axis=-1)


def l1_log_lik(y, y_hat, scale: float = 1.0) -> Tensor:
    """Negative absolute error, a pseudo-log-likelihood (not a normalised density)."""
    if not scale > 0:
        raise ContractError(f"scale must be positive, got {scale}")
    y, y_hat = _prep(y, y_hat)
    out = absolute(y_hat - y).sum(axis=-1)
    return out * (-1.0 / scale)


def sse_l2_log_lik(y, y_hat, theta, lam: float) -> Tensor:
    """``-sum (y - y_hat)^2 - lam * theta.theta`` for each Monte-Carlo sample.

    The batch is scored jointly, so the result has shape ``(L, 1)``.
    """
    if lam < 0:
        raise ContractError(f"lambda must be non-negative, got {lam}")
    y, y_hat = _prep(y, y_hat)
    theta = theta if isinstance(theta, Tensor) else Tensor(theta)
    n = y_hat.shape[0]
    sse = square(y_hat - y).reshape((n, -1)).sum(axis=1)
    out = -sse
    if lam:
        out = out - square(theta).reshape((n, -1)).sum(axis=1) * lam
    return out.reshape((n, 1))


class GaussianLikelihood:
    def __init__(self, sigma: float):
        if not sigma > 0:
            raise ContractError(f"sigma must be positive, got {sigma}")
        self.sigma = float(sigma)

    def __call__(self, y, y_hat, theta=None) -> Tensor:
        return gaussian_log_lik(y, y_hat, self.sigma)

    def __repr__(self):
        return f"GaussianLikelihood(sigma={self.sigma})"


class L1Likelihood:
    def __init__(self, scale: float = 1.0):
        if not scale > 0:
            raise ContractError(f"scale must be positive, got {scale}")
        self.scale = float(scale)

    def __call__(self, y, y_hat, theta=None) -> Tensor:
        return l1_log_lik(y, y_hat, self.scale)

    def __repr__(self):
        return f"L1Likelihood(scale={self.scale})"


class SseL2Likelihood:
    def __init__(self, lam: float = 0.0):
        if lam < 0:
            raise ContractError(f"lambda must be non-negative, got {lam}")
        self.lam = float(lam)

    def __call__(self, y, y_hat, theta=None) -> Tensor:
        if theta is None:
            raise ContractError("the regularised SSE likelihood needs the parameter samples")
        return sse_l2_log_lik(y, y_hat, theta, self.lam)

    def __repr__(self):
        return f"SseL2Likelihood(lam={self.lam})"


def mc_predictive_loss(log_liks, mode: str = "neg_log_mean_prob", sample_axis: int = 0) -> Tensor:
    """Monte-Carlo estimate of the negative posterior predictive, averaged over the batch.

    ``log_liks`` holds one log-likelihood per (sample, example). Modes:

    ``neg_log_mean_prob``
        ``mean_b [log L - logsumexp_l log_lik]``, i.e. minus the log of the
        Monte-Carlo predictive; stable when the likelihoods underflow.
    ``mean_prob``
        ``-mean_b mean_l exp(log_lik)``, the literal negated Monte-Carlo
        average of probabilities.
    ``neg_mean_log_prob``
        ``-mean_b mean_l log_lik``, the loss-averaging form used when the
        likelihood is itself a cost such as a regularised sum of squares.
    """
    ll = log_liks if isinstance(log_liks, Tensor) else Tensor(log_liks)
    if ll.ndim != 2:
        raise ShapeError(f"log-likelihoods must be 2-D (samples x examples), got {ll.shape}")
    if sample_axis not in (0, 1, -1, -2):
        raise ShapeError(f"sample_axis must be 0 or 1, got {sample_axis}")
    n_samples = ll.shape[sample_axis]
    if n_samples == 0:
        raise ContractError("need at least one Monte-Carlo sample")
    if mode == "neg_log_mean_prob":
        return (log(n_samples) - logsumexp(ll, axis=sample_axis)).mean()
    if mode == "mean_prob":
        return -(ll.exp().mean(axis=sample_axis).mean())
    if mode == "neg_mean_log_prob":
        return -ll.mean()
    raise ContractError(f"unknown loss mode {mode!r}; expected one of {LOSS_MODES}")
