"""Central finite-difference checks for the autodiff engine."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def numeric_grad(f: Callable[[], Tensor], t: Tensor, h: float = 1e-6, index=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``t.data`` (all entries, or just ``index``)."""
    if not t.data.flags.c_contiguous:
        t.data = np.ascontiguousarray(t.data)
    flat = t.data.reshape(-1)
    out = np.zeros_like(flat)
    positions = range(flat.size) if index is None else np.atleast_1d(index)
    with no_grad():
        for i in positions:
            old = flat[i]
            flat[i] = old + h
            up = f().item()
            flat[i] = old - h
            down = f().item()
            flat[i] = old
            out[i] = (up - down) / (2 * h)
    return out.reshape(t.shape) if index is None else out[positions]


def relative_error(analytic, numeric, floor: float = 1e-8) -> float:
    """``max |a - n| / max(|a|, |n|)``, ignoring entries where both are below ``floor``.

    Entries with ``|a - n| <= floor`` count as exact, so a gradient that is
    zero analytically and ~1e-11 numerically does not register as a 100 % error.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    diff = np.abs(a - n)
    scale = np.maximum(np.abs(a), np.abs(n))
    rel = np.where(diff <= floor, 0.0, diff / np.where(scale > 0, scale, 1.0))
    return float(rel.max(initial=0.0))


def check_gradients(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-6,
                    max_entries: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Backpropagate ``f()`` and compare every parameter gradient with central differences.

    ``max_entries`` limits how many coordinates per parameter are probed
    (chosen with ``rng``). Returns the largest relative error found.
    """
    for p in params:
        p.grad = None
    f().backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros(p.shape) if p.grad is None else p.grad
        if max_entries is not None and p.size > max_entries:
            rng = rng or np.random.default_rng(0)
            idx = rng.choice(p.size, size=max_entries, replace=False)
            num = numeric_grad(f, p, h, idx)
            worst = max(worst, relative_error(analytic.reshape(-1)[idx], num))
        else:
            worst = max(worst, relative_error(analytic, numeric_grad(f, p, h)))
    return worst
