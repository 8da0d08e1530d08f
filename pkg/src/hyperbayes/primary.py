"""Functional primary models ``f_theta(x)``.

Parameters are inputs, not state: every forward pass takes a
:class:`ThetaBatch` of flattened parameter vectors produced by a posterior
model. Two layouts are supported:

* unconditioned, ``values`` of shape ``(L, P)``: one parameter vector per
  Monte-Carlo sample, shared by the whole input batch;
* conditional, ``values`` of shape ``(L, B, P)``: one parameter vector per
  (sample, batch element) pair, evaluated with per-slice matrix products.

Outputs always have shape ``(L, B, output_dim)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod, sqrt
from typing import Sequence

import numpy as np

from .errors import ContractError
from .tensor import Tensor, batched_matmul, concat, mul, relu, tanh

Shape = tuple[int, ...]


class ThetaLayout:
    """Named partition of a flat parameter vector."""

    def __init__(self, segments: Sequence[tuple[str, Sequence[int]]]):
        segs = []
        names = set()
        for name, shape in segments:
            shape = tuple(int(s) for s in shape)
            if name in names:
                raise ContractError(f"duplicate segment name {name!r}")
            if not shape or any(s <= 0 for s in shape):
                raise ContractError(f"segment {name!r} needs positive extents, got {shape}")
            names.add(name)
            segs.append((name, shape))
        if not segs:
            raise ContractError("a layout needs at least one segment")
        self.segments: tuple[tuple[str, Shape], ...] = tuple(segs)
        offsets = np.cumsum([0] + [prod(s) for _, s in segs])
        self._offsets = {name: (int(offsets[i]), int(offsets[i + 1])) for i, (name, _) in enumerate(segs)}
        self.total_len = int(offsets[-1])

    def __eq__(self, other):
        return isinstance(other, ThetaLayout) and self.segments == other.segments

    def __hash__(self):
        return hash(self.segments)

    def __repr__(self):
        return f"ThetaLayout(P={self.total_len}, segments={[n for n, _ in self.segments]})"

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.segments]

    def shape_of(self, name: str) -> Shape:
        return dict(self.segments)[name]

    def span(self, name: str) -> tuple[int, int]:
        return self._offsets[name]

    def subset(self, names: Sequence[str]) -> "ThetaLayout":
        lookup = dict(self.segments)
        missing = [n for n in names if n not in lookup]
        if missing:
            raise ContractError(f"unknown segments {missing}")
        return ThetaLayout([(n, lookup[n]) for n in names])

    def slice(self, theta):
        """Split ``theta`` (``(..., P)``) into ``{name: (..., *shape)}`` views."""
        theta = theta if isinstance(theta, Tensor) else Tensor(theta)
        if theta.shape[-1] != self.total_len:
            raise ContractError(f"theta has trailing extent {theta.shape[-1]}, layout expects {self.total_len}")
        lead = theta.shape[:-1]
        out = {}
        for name, shape in self.segments:
            lo, hi = self._offsets[name]
            out[name] = theta[(..., slice(lo, hi))].reshape(lead + shape)
        return out

    def flatten(self, parts) -> Tensor:
        """Inverse of :meth:`slice`."""
        pieces = []
        lead = None
        for name, shape in self.segments:
            part = parts[name]
            part = part if isinstance(part, Tensor) else Tensor(part)
            if part.shape[part.ndim - len(shape):] != shape:
                raise ContractError(f"segment {name!r} has shape {part.shape}, expected trailing {shape}")
            here = part.shape[: part.ndim - len(shape)]
            if lead is None:
                lead = here
            elif here != lead:
                raise ContractError(f"segment {name!r} has leading extents {here}, expected {lead}")
            pieces.append(part.reshape(here + (prod(shape),)))
        return concat(pieces, axis=-1)

    def split_flat(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        """Numpy counterpart of :meth:`slice`, for inspection and tests."""
        theta = np.asarray(theta)
        return {n: theta[..., lo:hi].reshape(theta.shape[:-1] + s)
                for (n, s), (lo, hi) in zip(self.segments, (self._offsets[n] for n in self.names))}


@dataclass
class ThetaBatch:
    """Parameter samples: ``values`` is ``(L, P)`` or, when conditional, ``(L, B, P)``."""

    values: Tensor
    layout: ThetaLayout

    def __post_init__(self):
        if not isinstance(self.values, Tensor):
            self.values = Tensor(self.values)
        if self.values.ndim not in (2, 3):
            raise ContractError(f"theta batch must be (L, P) or (L, B, P), got {self.values.shape}")
        if self.values.shape[-1] != self.layout.total_len:
            raise ContractError(
                f"theta trailing extent {self.values.shape[-1]} does not match layout length {self.layout.total_len}"
            )

    @property
    def conditional(self) -> bool:
        return self.values.ndim == 3

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    def parts(self) -> dict[str, Tensor]:
        return self.layout.slice(self.values)


def _affine(h: Tensor, w: Tensor, b: Tensor | None, conditional: bool) -> Tensor:
    # h: (L|1, B, k). Unconditioned w: (L, o, k), b: (L, o).
    # Conditional w: (L, B, o, k), b: (L, B, o).
    if conditional:
        out = batched_matmul(w, h.reshape(h.shape + (1,)))
        out = out.reshape(out.shape[:-1])
        return out if b is None else out + b
    out = batched_matmul(h, w.T)
    if b is None:
        return out
    return out + b.reshape((b.shape[0], 1, b.shape[1]))


def _as_input(x, dim: int) -> Tensor:
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 2 or x.shape[1] != dim:
        raise ContractError(f"expected inputs of shape (B, {dim}), got {x.shape}")
    return x.reshape((1,) + x.shape)


def _uniform_fan_in(rng: np.random.Generator, layout: ThetaLayout, fan_in: dict[str, int]) -> np.ndarray:
    parts = []
    for name, shape in layout.segments:
        bound = 1.0 / sqrt(fan_in[name])
        parts.append(rng.uniform(-bound, bound, size=prod(shape)))
    return np.concatenate(parts)


class PrimaryModel:
    """Common surface of the functional primary models."""

    layout: ThetaLayout
    input_dim: int
    output_dim: int

    def forward(self, theta: ThetaBatch, x, rng: np.random.Generator | None = None) -> Tensor:
        raise NotImplementedError

    def __call__(self, theta, x, rng=None):
        return self.forward(theta, x, rng=rng)

    def init_theta(self, rng: np.random.Generator) -> np.ndarray:
        """A conventional point initialisation (fan-in scaled uniform)."""
        raise NotImplementedError

    def _check(self, theta) -> ThetaBatch:
        if not isinstance(theta, ThetaBatch):
            theta = ThetaBatch(theta, self.layout)
        if theta.layout != self.layout:
            raise ContractError(f"theta layout {theta.layout!r} does not match model layout {self.layout!r}")
        return theta


class LinearModel(PrimaryModel):
    """``y = W x + b``."""

    def __init__(self, input_dim: int = 1, output_dim: int = 1):
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        self.layout = ThetaLayout([("W", (self.output_dim, self.input_dim)), ("b", (self.output_dim,))])

    def forward(self, theta, x, rng=None):
        theta = self._check(theta)
        p = theta.parts()
        return _affine(_as_input(x, self.input_dim), p["W"], p["b"], theta.conditional)

    def init_theta(self, rng):
        return _uniform_fan_in(rng, self.layout, {"W": self.input_dim, "b": self.input_dim})


class MLP(PrimaryModel):
    """Fully connected network with a linear output layer.

    ``widths`` lists every layer including input and output, e.g. ``[1, 512, 1]``.
    ``dropout`` drops hidden units while training (only when a generator is
    passed to :meth:`forward`).
    """

    def __init__(self, widths: Sequence[int], activation: str = "relu", dropout: float = 0.0):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or any(w <= 0 for w in widths):
            raise ContractError(f"MLP widths must be >= 2 positive integers, got {widths}")
        if activation not in ("relu", "tanh"):
            raise ContractError(f"unsupported activation {activation!r}")
        if not 0.0 <= dropout < 1.0:
            raise ContractError(f"dropout must lie in [0, 1), got {dropout}")
        self.widths = widths
        self.activation = activation
        self.dropout = float(dropout)
        self.input_dim, self.output_dim = widths[0], widths[-1]
        segs = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            segs += [(f"layer{i}.W", (b, a)), (f"layer{i}.b", (b,))]
        self.layout = ThetaLayout(segs)

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def forward(self, theta, x, rng=None):
        theta = self._check(theta)
        p = theta.parts()
        act = relu if self.activation == "relu" else tanh
        h = _as_input(x, self.input_dim)
        for i in range(self.n_layers):
            h = _affine(h, p[f"layer{i}.W"], p[f"layer{i}.b"], theta.conditional)
            if i < self.n_layers - 1:
                h = act(h)
                if self.dropout and rng is not None:
                    keep = rng.random(h.shape) >= self.dropout
                    h = mul(h, keep / (1.0 - self.dropout))
        return h

    def init_theta(self, rng):
        fan = {}
        for i, a in enumerate(self.widths[:-1]):
            fan[f"layer{i}.W"] = fan[f"layer{i}.b"] = a
        return _uniform_fan_in(rng, self.layout, fan)


@dataclass(frozen=True)
class NBeatsConfig:
    """Generic-block N-BEATS settings (single stack)."""

    input_len: int = 6
    horizon: int = 3
    blocks: int = 3
    fc_width: int = 64
    fc_depth: int = 4
    theta_dim: int = 32
    shared: bool = True

    def __post_init__(self):
        for field in ("input_len", "horizon", "blocks", "fc_width", "fc_depth", "theta_dim"):
            if getattr(self, field) <= 0:
                raise ContractError(f"NBeatsConfig.{field} must be positive, got {getattr(self, field)}")


class NBeats(PrimaryModel):
    """Doubly residual stack of generic blocks.

    Each block runs its residual input through ``fc_depth`` ReLU layers, maps
    the result linearly (no bias) to a ``theta_dim`` expansion vector, and
    expands that vector with two learned linear bases into a backcast and a
    forecast. The next block sees ``residual - backcast``; the model output is
    the sum of all block forecasts. With ``shared=True`` every block reuses the
    same parameters, so ``P`` counts a single block.
    """

    def __init__(self, cfg: NBeatsConfig = NBeatsConfig()):
        self.cfg = cfg
        self.input_dim, self.output_dim = cfg.input_len, cfg.horizon
        segs = []
        for prefix in self._prefixes():
            segs += self._block_segments(prefix)
        self.layout = ThetaLayout(segs)

    def _prefixes(self) -> list[str]:
        if self.cfg.shared:
            return ["block"]
        return [f"block{i}" for i in range(self.cfg.blocks)]

    def _block_segments(self, prefix):
        c = self.cfg
        segs = []
        width_in = c.input_len
        for j in range(c.fc_depth):
            segs += [(f"{prefix}.fc{j}.W", (c.fc_width, width_in)), (f"{prefix}.fc{j}.b", (c.fc_width,))]
            width_in = c.fc_width
        segs += [
            (f"{prefix}.theta.W", (c.theta_dim, c.fc_width)),
            (f"{prefix}.backcast.W", (c.input_len, c.theta_dim)),
            (f"{prefix}.backcast.b", (c.input_len,)),
            (f"{prefix}.forecast.W", (c.horizon, c.theta_dim)),
            (f"{prefix}.forecast.b", (c.horizon,)),
        ]
        return segs

    def _block(self, p, prefix, h, conditional):
        a = h
        for j in range(self.cfg.fc_depth):
            a = relu(_affine(a, p[f"{prefix}.fc{j}.W"], p[f"{prefix}.fc{j}.b"], conditional))
        t = _affine(a, p[f"{prefix}.theta.W"], None, conditional)
        back = _affine(t, p[f"{prefix}.backcast.W"], p[f"{prefix}.backcast.b"], conditional)
        fore = _affine(t, p[f"{prefix}.forecast.W"], p[f"{prefix}.forecast.b"], conditional)
        return back, fore

    def forward(self, theta, x, rng=None):
        theta = self._check(theta)
        p = theta.parts()
        residual = _as_input(x, self.input_dim)
        forecast = None
        prefixes = self._prefixes()
        for i in range(self.cfg.blocks):
            prefix = prefixes[0] if self.cfg.shared else prefixes[i]
            back, fore = self._block(p, prefix, residual, theta.conditional)
            residual = residual - back
            forecast = fore if forecast is None else forecast + fore
        return forecast

    def init_theta(self, rng):
        c = self.cfg
        fan = {}
        for prefix in self._prefixes():
            width_in = c.input_len
            for j in range(c.fc_depth):
                fan[f"{prefix}.fc{j}.W"] = fan[f"{prefix}.fc{j}.b"] = width_in
                width_in = c.fc_width
            fan[f"{prefix}.theta.W"] = c.fc_width
            for head in ("backcast", "forecast"):
                fan[f"{prefix}.{head}.W"] = fan[f"{prefix}.{head}.b"] = c.theta_dim
        return _uniform_fan_in(rng, self.layout, fan)


def linear_forward(theta: ThetaBatch, x, model: LinearModel | None = None) -> Tensor:
    model = model or LinearModel(theta.layout.shape_of("W")[1], theta.layout.shape_of("W")[0])
    return model.forward(theta, x)


def mlp_forward(theta: ThetaBatch, x, arch: Sequence[int], activation: str = "relu") -> Tensor:
    return MLP(arch, activation).forward(theta, x)


def nbeats_forward(theta: ThetaBatch, x, cfg: NBeatsConfig) -> Tensor:
    return NBeats(cfg).forward(theta, x)
