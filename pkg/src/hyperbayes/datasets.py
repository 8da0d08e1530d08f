"""Synthetic regression data, series windowing and standardisation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, IngestionError

# High-variance points appended to the x*sin(x) samples.
XSINX_EXTRA_POINTS = ((7.0, -7.0), (8.5, 7.0), (10.0, -7.0), (11.5, 7.0))

# Reference forecasting split: 2075 training windows out of 2960.
DEFAULT_TRAIN_FRACTION = 2075 / 2960


@dataclass
class Standardizer:
    """Per-column affine map ``(v - mean) / std``."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values) -> "Standardizer":
        values = np.asarray(values, dtype=np.float64)
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    def transform(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean

    def inverse_scale(self, values) -> np.ndarray:
        """Undo only the scaling (for spreads and differences)."""
        return np.asarray(values, dtype=np.float64) * self.std


@dataclass
class RegressionDataset:
    """Training pairs plus optional labels, test inputs and fitted scalers.

    ``labels`` (N, 1) are extra conditioning columns for the posterior, not
    inputs of the primary model.
    """

    x: np.ndarray
    y: np.ndarray
    labels: np.ndarray | None = None
    x_test: np.ndarray | None = None
    labels_test: np.ndarray | None = None
    x_scaler: Standardizer | None = None
    y_scaler: Standardizer | None = None

    def __post_init__(self):
        self.x = _as_2d(self.x)
        self.y = _as_2d(self.y)
        if len(self.x) != len(self.y):
            raise ContractError(f"x has {len(self.x)} rows but y has {len(self.y)}")
        if self.labels is not None:
            self.labels = _as_2d(self.labels)
            if len(self.labels) != len(self.x):
                raise ContractError("labels must have one row per example")
        if self.x_test is not None:
            self.x_test = _as_2d(self.x_test)
        if self.labels_test is not None:
            self.labels_test = _as_2d(self.labels_test)

    def __len__(self):
        return len(self.x)

    def standardize(self) -> "RegressionDataset":
        """Standardise x and y with statistics of the training rows."""
        xs, ys = Standardizer.fit(self.x), Standardizer.fit(self.y)
        return replace(
            self,
            x=xs.transform(self.x),
            y=ys.transform(self.y),
            x_test=None if self.x_test is None else xs.transform(self.x_test),
            x_scaler=xs,
            y_scaler=ys,
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = [f"x{i}" for i in range(self.x.shape[1])] + [f"y{i}" for i in range(self.y.shape[1])]
            if self.labels is not None:
                header.append("label")
            w.writerow(header)
            for i in range(len(self.x)):
                row = [repr(float(v)) for v in self.x[i]] + [repr(float(v)) for v in self.y[i]]
                if self.labels is not None:
                    row.append(repr(float(self.labels[i, 0])))
                w.writerow(row)


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(-1, 1) if a.ndim == 1 else a


def standardize(data: RegressionDataset) -> RegressionDataset:
    return data.standardize()


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def gen_xsinx(n_base: int = 32, rng=None, grid: bool = False, low: float = 0.0, high: float = 12.0,
              n_test: int = 1024, test_low: float = -2.0, test_high: float = 14.0) -> RegressionDataset:
    """Samples of ``x sin(x)`` on ``[low, high)`` followed by the four high-variance points.

    The first ``n_base`` rows are on the curve; the last four are
    :data:`XSINX_EXTRA_POINTS`. The test inputs are a grid of ``n_test``
    points over the wider range ``[test_low, test_high]``.
    """
    rng = _rng(rng)
    if grid:
        xb = np.linspace(low, high, n_base, endpoint=False)
    else:
        xb = rng.uniform(low, high, size=n_base)
    extra = np.array(XSINX_EXTRA_POINTS)
    x = np.concatenate([xb, extra[:, 0]])
    y = np.concatenate([xb * np.sin(xb), extra[:, 1]])
    return RegressionDataset(x, y, x_test=np.linspace(test_low, test_high, n_test))


def multimodal_scale(x):
    return 10.0 * np.asarray(x) - 5.0


def multimodal_curves(x) -> tuple[np.ndarray, np.ndarray]:
    """Noiseless lower and upper branch values at ``x``."""
    a = multimodal_scale(x)
    lower = a * np.sin(a)
    return lower, lower + 1.0


def gen_multimodal(n: int = 128, noise_var: float = 0.01, rng=None, n_test: int = 200,
                   overlap: tuple[float, float] = (0.3, 0.6)) -> RegressionDataset:
    """Two parallel ``a sin a`` branches, the upper one offset by +1.

    Even rows come from the lower branch on ``(0, 0.6)`` and odd rows from the
    upper branch on ``(0.3, 1)``, so both branches get ``n / 2`` samples.
    Inside the overlap the label is the row parity (0 lower, 1 upper);
    outside it the label is a fair coin, i.e. carries no information, which is
    also how labels are assigned to the test inputs.
    """
    if n % 2:
        raise ContractError("n must be even so both branches get the same count")
    rng = _rng(rng)
    idx = np.arange(n)
    upper = idx % 2 == 1
    x = np.where(upper, rng.uniform(overlap[0], 1.0, size=n), rng.uniform(0.0, overlap[1], size=n))
    lo, hi = multimodal_curves(x)
    y = np.where(upper, hi, lo) + rng.normal(0.0, np.sqrt(noise_var), size=n)
    inside = (x > overlap[0]) & (x < overlap[1])
    labels = np.where(inside, upper.astype(float), rng.integers(0, 2, size=n).astype(float))
    x_test = np.linspace(0.0, 1.0, n_test + 2)[1:-1]
    labels_test = rng.integers(0, 2, size=n_test).astype(float)
    return RegressionDataset(x, y, labels=labels, x_test=x_test, labels_test=labels_test)


# -- time series ----------------------------------------------------------
@dataclass
class WindowedSeries:
    """Sliding input windows and the horizon that immediately follows each."""

    inputs: np.ndarray
    targets: np.ndarray
    split: int | None = None

    def __len__(self):
        return len(self.inputs)

    @property
    def train(self) -> "WindowedSeries":
        if self.split is None:
            raise ContractError("series has no split")
        return WindowedSeries(self.inputs[: self.split], self.targets[: self.split])

    @property
    def test(self) -> "WindowedSeries":
        if self.split is None:
            raise ContractError("series has no split")
        return WindowedSeries(self.inputs[self.split:], self.targets[self.split:])

    @property
    def x(self):
        return self.inputs

    @property
    def y(self):
        return self.targets


def window_series(series, input_len: int, horizon: int) -> WindowedSeries:
    series = np.asarray(series, dtype=np.float64).reshape(-1)
    if input_len < 1 or horizon < 1:
        raise ContractError("window lengths must be positive")
    if len(series) < input_len + horizon:
        raise ContractError(f"series of length {len(series)} is shorter than {input_len} + {horizon}")
    m = len(series) - input_len - horizon + 1
    idx = np.arange(m)[:, None]
    inputs = series[idx + np.arange(input_len)]
    targets = series[idx + input_len + np.arange(horizon)]
    return WindowedSeries(inputs, targets)


def split(data: WindowedSeries, train_fraction: float = DEFAULT_TRAIN_FRACTION) -> WindowedSeries:
    """Chronological split: the first ``round(train_fraction * M)`` windows train."""
    if not 0.0 < train_fraction < 1.0:
        raise ContractError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    cut = int(round(train_fraction * len(data)))
    if cut == 0 or cut == len(data):
        raise ContractError("split leaves an empty partition")
    return WindowedSeries(data.inputs, data.targets, cut)


def standardize_windows(data: WindowedSeries) -> tuple[WindowedSeries, Standardizer]:
    """Scale by a single mean/std fitted on the training windows only."""
    if data.split is None:
        raise ContractError("split the series before standardising")
    train_values = np.concatenate([data.inputs[: data.split].ravel(), data.targets[: data.split].ravel()])
    scaler = Standardizer.fit(train_values)
    return WindowedSeries(scaler.transform(data.inputs), scaler.transform(data.targets), data.split), scaler


def load_csv_series(path) -> np.ndarray:
    """Read a single numeric column; a non-numeric first row is treated as a header."""
    values = []
    with open(Path(path), newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row if c.strip()]
            if not cells:
                continue
            if len(cells) != 1:
                raise IngestionError(f"{path}:{lineno}: expected one value per row, got {len(cells)}")
            try:
                values.append(float(cells[0]))
            except ValueError:
                if lineno == 1 and not values:
                    continue
                raise IngestionError(f"{path}:{lineno}: cannot parse {cells[0]!r} as a number") from None
    if not values:
        raise IngestionError(f"{path}: no numeric rows")
    return np.array(values)


def synthetic_seasonal_series(length: int = 2976, period: int = 12, amplitude: float = 6.0,
                              trend: float = 1.0, noise: float = 1.0, level: float = 9.0, rng=None) -> np.ndarray:
    """Sine of the given period plus a linear trend (``trend`` is the total rise) and Gaussian noise."""
    rng = _rng(rng)
    t = np.arange(length)
    return (level + amplitude * np.sin(2 * np.pi * t / period) + trend * t / max(length - 1, 1)
            + rng.normal(0.0, noise, size=length))
