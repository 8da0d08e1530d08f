"""Trainable generators of primary-model parameter samples.

A posterior model turns exogenous noise ``z`` (and, for the conditional
variants, the primary model's input) into parameter vectors. Because ``z``
is drawn outside the differentiable graph, samples are reparameterised by
construction and gradients reach the generator weights directly.

Every generator exposes ``sample(L, rng, cond=None) -> ThetaBatch``,
``parameters()`` and ``conditional`` / ``cond_dim`` attributes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from math import sqrt
from typing import Sequence

import numpy as np

from .errors import ContractError
from .primary import ThetaBatch, ThetaLayout
from .tensor import Tensor, broadcast_to, concat, exp, matmul, relu, tanh


@dataclass(frozen=True)
class LatentSpec:
    """Base distribution of the latent noise: ``uniform(low, high)`` or ``normal``."""

    dim: int = 4
    base: str = "uniform"
    low: float = -1.0
    high: float = 1.0

    def __post_init__(self):
        if self.dim <= 0:
            raise ContractError(f"latent dim must be positive, got {self.dim}")
        if self.base not in ("uniform", "normal"):
            raise ContractError(f"latent base must be 'uniform' or 'normal', got {self.base!r}")
        if self.base == "uniform" and not self.low < self.high:
            raise ContractError(f"uniform latent needs low < high, got ({self.low}, {self.high})")

    def sample(self, rng: np.random.Generator, lead: tuple[int, ...]) -> np.ndarray:
        shape = tuple(lead) + (self.dim,)
        if self.base == "uniform":
            return rng.uniform(self.low, self.high, size=shape)
        return rng.standard_normal(shape)

    @property
    def variance(self) -> float:
        if self.base == "uniform":
            return (self.high - self.low) ** 2 / 12.0
        return 1.0


_ARCH_RE = re.compile(r"^\s*\[(.*)\]\s*$")


def parse_arch(spec, target_len: int | None = None) -> list[int]:
    """Parse bracket notation such as ``"[4,16,P]"`` into layer widths.

    ``P`` (or ``N``) stands for the parameter-vector length ``target_len``.
    The first entry is the latent dimension and the last is the output width.
    """
    if isinstance(spec, str):
        m = _ARCH_RE.match(spec)
        if not m:
            raise ContractError(f"architecture {spec!r} is not in bracket notation, e.g. [4,16,P]")
        tokens = [t.strip() for t in m.group(1).split(",") if t.strip()]
    else:
        tokens = list(spec)
    widths = []
    for tok in tokens:
        if isinstance(tok, str) and tok.upper() in ("P", "N"):
            if target_len is None:
                raise ContractError(f"architecture {spec!r} uses P but no parameter length is known")
            widths.append(int(target_len))
            continue
        try:
            value = int(tok)
        except (TypeError, ValueError):
            raise ContractError(f"bad width {tok!r} in architecture {spec!r}") from None
        if value <= 0:
            raise ContractError(f"widths must be positive, got {value} in {spec!r}")
        widths.append(value)
    if len(widths) < 2:
        raise ContractError(f"architecture {spec!r} needs an input and an output width")
    return widths


def format_arch(widths: Sequence[int], target_len: int | None = None) -> str:
    return "[" + ",".join("P" if (target_len is not None and i == len(widths) - 1 and w == target_len) else str(w)
                          for i, w in enumerate(widths)) + "]"


class Dense:
    """Stack of affine layers with ReLU between them, applied on the last axis."""

    def __init__(self, widths: Sequence[int], rng: np.random.Generator, final_scale: float = 0.1,
                 final_bias: np.ndarray | None = None):
        self.widths = [int(w) for w in widths]
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        n = len(self.widths) - 1
        for i, (a, b) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            bound = 1.0 / sqrt(a)
            w = rng.uniform(-bound, bound, size=(b, a))
            bias = np.zeros(b)
            if i == n - 1:
                w *= final_scale
                if final_bias is not None:
                    bias = np.array(final_bias, dtype=np.float64).reshape(b)
            self.weights.append(Tensor(w, requires_grad=True))
            self.biases.append(Tensor(bias, requires_grad=True))

    def __call__(self, h: Tensor) -> Tensor:
        lead = h.shape[:-1]
        h = h.reshape((-1, h.shape[-1]))
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = matmul(h, w.T) + b
            if i < len(self.weights) - 1:
                h = relu(h)
        return h.reshape(lead + (h.shape[-1],))

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return [p for p in out if p.requires_grad]


class Hypernet:
    """MLP posterior ``theta = g(z)`` or, with ``cond_dim > 0``, ``theta = g(z, x)``.

    ``arch`` lists layer widths starting at the latent dimension and ending
    at the parameter length, e.g. ``[4, 16, P]``. Conditioning features are
    appended to ``z`` as extra input columns. One latent draw is shared by
    every batch row of a Monte-Carlo sample, so a sample is a coherent
    function of the input.

    ``output_bound`` squashes samples into ``(-bound, bound)`` with ``tanh``,
    a way of restricting the parameter range.
    """

    def __init__(self, layout: ThetaLayout, arch, rng: np.random.Generator, latent: LatentSpec | None = None,
                 cond_dim: int = 0, output_bound: float | None = None, init_theta: np.ndarray | None = None,
                 final_scale: float = 0.1):
        widths = parse_arch(arch, layout.total_len)
        if widths[-1] != layout.total_len:
            raise ContractError(
                f"posterior output length {widths[-1]} does not match primary parameter length {layout.total_len}"
            )
        self.latent = latent or LatentSpec(dim=widths[0])
        if self.latent.dim != widths[0]:
            raise ContractError(f"latent dim {self.latent.dim} does not match first arch width {widths[0]}")
        if cond_dim < 0:
            raise ContractError("cond_dim must be non-negative")
        if output_bound is not None and output_bound <= 0:
            raise ContractError("output_bound must be positive")
        self.layout = layout
        self.arch = widths
        self.cond_dim = int(cond_dim)
        self.output_bound = output_bound
        bias = init_theta
        if bias is not None and output_bound is not None:
            bias = np.arctanh(np.clip(np.asarray(bias) / output_bound, -0.999, 0.999))
        self.net = Dense([widths[0] + self.cond_dim] + widths[1:], rng, final_scale=final_scale, final_bias=bias)

    @property
    def conditional(self) -> bool:
        return self.cond_dim > 0

    @property
    def input_weight(self) -> Tensor:
        return self.net.weights[0]

    def parameters(self) -> list[Tensor]:
        return self.net.parameters()

    def freeze_inputs(self) -> None:
        """Zero and freeze every input-facing weight, giving a z-independent (Dirac) posterior."""
        w = self.net.weights[0]
        w.data = np.zeros_like(w.data)
        w.requires_grad = False
        w.grad = None

    def _squash(self, theta: Tensor) -> Tensor:
        if self.output_bound is None:
            return theta
        return tanh(theta) * self.output_bound

    def sample(self, n_samples: int, rng: np.random.Generator, cond=None) -> ThetaBatch:
        if n_samples < 1:
            raise ContractError(f"need at least one sample, got {n_samples}")
        z = Tensor(self.latent.sample(rng, (n_samples,)))
        if not self.conditional:
            if cond is not None:
                raise ContractError("unconditioned posterior received conditioning inputs")
            return ThetaBatch(self._squash(self.net(z)), self.layout)
        if cond is None:
            raise ContractError("conditional posterior needs conditioning inputs")
        cond = cond if isinstance(cond, Tensor) else Tensor(cond)
        if cond.ndim != 2 or cond.shape[1] != self.cond_dim:
            raise ContractError(f"conditioning inputs must be (B, {self.cond_dim}), got {cond.shape}")
        n_batch = cond.shape[0]
        zb = broadcast_to(z.reshape((n_samples, 1, self.latent.dim)), (n_samples, n_batch, self.latent.dim))
        cb = broadcast_to(cond.reshape((1, n_batch, self.cond_dim)), (n_samples, n_batch, self.cond_dim))
        return ThetaBatch(self._squash(self.net(concat([zb, cb], axis=-1))), self.layout)


class MdnPosterior:
    """Single-Gaussian mixture-density head over the parameters.

    A ReLU trunk maps the conditioning input to a mean and a log-scale per
    parameter; samples are ``mu + exp(log_sigma) * eps`` with standard normal
    ``eps``, so gradients flow into both heads.
    """

    def __init__(self, layout: ThetaLayout, cond_dim: int, rng: np.random.Generator, hidden: Sequence[int] = (16,),
                 init_theta: np.ndarray | None = None, init_log_scale: float = np.log(0.01)):
        if cond_dim <= 0:
            raise ContractError("an MDN posterior needs conditioning inputs")
        self.layout = layout
        self.cond_dim = int(cond_dim)
        self.hidden = [int(h) for h in hidden]
        self.trunk = Dense([self.cond_dim] + self.hidden, rng, final_scale=1.0) if self.hidden else None
        width = self.hidden[-1] if self.hidden else self.cond_dim
        P = layout.total_len
        self.mean_head = Dense([width, P], rng, final_scale=0.1, final_bias=init_theta)
        self.log_scale_head = Dense([width, P], rng, final_scale=0.1, final_bias=np.full(P, init_log_scale))

    conditional = True

    def parameters(self) -> list[Tensor]:
        params = self.trunk.parameters() if self.trunk else []
        return params + self.mean_head.parameters() + self.log_scale_head.parameters()

    def heads(self, cond) -> tuple[Tensor, Tensor]:
        cond = cond if isinstance(cond, Tensor) else Tensor(cond)
        if cond.ndim != 2 or cond.shape[1] != self.cond_dim:
            raise ContractError(f"conditioning inputs must be (B, {self.cond_dim}), got {cond.shape}")
        h = relu(self.trunk(cond)) if self.trunk else cond
        return self.mean_head(h), self.log_scale_head(h)

    def sample(self, n_samples: int, rng: np.random.Generator, cond=None) -> ThetaBatch:
        if n_samples < 1:
            raise ContractError(f"need at least one sample, got {n_samples}")
        if cond is None:
            raise ContractError("an MDN posterior needs conditioning inputs")
        mu, log_sigma = self.heads(cond)
        eps = Tensor(rng.standard_normal((n_samples,) + mu.shape))
        theta = mu.reshape((1,) + mu.shape) + exp(log_sigma).reshape((1,) + mu.shape) * eps
        return ThetaBatch(theta, self.layout)


class PointPosterior:
    """Dirac posterior: a single trainable parameter vector (maximum likelihood training)."""

    cond_dim = 0
    conditional = False

    def __init__(self, layout: ThetaLayout, init_theta: np.ndarray | None = None):
        self.layout = layout
        init = np.zeros(layout.total_len) if init_theta is None else np.asarray(init_theta, dtype=np.float64)
        if init.shape != (layout.total_len,):
            raise ContractError(f"initial theta must have length {layout.total_len}")
        self.theta = Tensor(init, requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return [self.theta]

    def sample(self, n_samples: int, rng: np.random.Generator, cond=None) -> ThetaBatch:
        if n_samples < 1:
            raise ContractError(f"need at least one sample, got {n_samples}")
        values = broadcast_to(self.theta.reshape((1, -1)), (n_samples, self.layout.total_len))
        return ThetaBatch(values, self.layout)


class PerLayerPosterior:
    """Independent generators for disjoint groups of parameter segments."""

    def __init__(self, layout: ThetaLayout, parts: Sequence[tuple[Sequence[str], object]]):
        seen: dict[str, int] = {}
        for i, (names, gen) in enumerate(parts):
            for name in names:
                if name in seen:
                    raise ContractError(f"segment {name!r} is covered by parts {seen[name]} and {i}")
                seen[name] = i
            sub = layout.subset(names)
            if gen.layout.total_len != sub.total_len:
                raise ContractError(
                    f"part {i} emits {gen.layout.total_len} values but its segments need {sub.total_len}"
                )
        missing = [n for n in layout.names if n not in seen]
        if missing:
            raise ContractError(f"segments {missing} are not covered by any part")
        flags = {bool(gen.conditional) for _, gen in parts}
        if len(flags) != 1:
            raise ContractError("cannot mix conditional and unconditioned parts")
        self.layout = layout
        self.parts = [(list(names), gen, layout.subset(names)) for names, gen in parts]
        self.conditional = flags.pop()
        dims = {gen.cond_dim for _, gen in parts}
        if len(dims) != 1:
            raise ContractError("all parts must share the same conditioning width")
        self.cond_dim = dims.pop()

    def parameters(self) -> list[Tensor]:
        out = []
        for _, gen, _ in self.parts:
            out += gen.parameters()
        return out

    def sample(self, n_samples: int, rng: np.random.Generator, cond=None) -> ThetaBatch:
        pieces: dict[str, Tensor] = {}
        for names, gen, sub in self.parts:
            values = gen.sample(n_samples, rng, cond).values
            pieces.update(sub.slice(values))
        return ThetaBatch(self.layout.flatten(pieces), self.layout)


def layer_groups(layout: ThetaLayout) -> list[list[str]]:
    """Group segments by layer, using the name before the last dot (``layer0.W`` -> ``layer0``)."""
    groups: dict[str, list[str]] = {}
    for name in layout.names:
        groups.setdefault(name.rsplit(".", 1)[0], []).append(name)
    return list(groups.values())


def compose_per_layer(layout: ThetaLayout, parts: Sequence[tuple[Sequence[str], object]]) -> PerLayerPosterior:
    return PerLayerPosterior(layout, parts)


def per_layer_hypernets(layout: ThetaLayout, hidden: Sequence[int], rng: np.random.Generator,
                        latent: LatentSpec | None = None, cond_dim: int = 0,
                        init_theta: np.ndarray | None = None) -> PerLayerPosterior:
    """One hypernet per layer, each with ``[latent, *hidden, P_layer]`` widths."""
    latent = latent or LatentSpec()
    parts = []
    for names in layer_groups(layout):
        sub = layout.subset(names)
        bias = None
        if init_theta is not None:
            bias = np.concatenate([np.asarray(init_theta)[slice(*layout.span(n))] for n in names])
        gen = Hypernet(sub, [latent.dim, *hidden, sub.total_len], rng, latent=latent, cond_dim=cond_dim,
                       init_theta=bias)
        parts.append((names, gen))
    return PerLayerPosterior(layout, parts)


def sample_unconditioned(g, n_samples: int, rng: np.random.Generator) -> ThetaBatch:
    if g.conditional:
        raise ContractError("sample_unconditioned called on a conditional posterior")
    return g.sample(n_samples, rng)


def sample_conditional(g, x, n_samples: int, rng: np.random.Generator) -> ThetaBatch:
    if not g.conditional:
        raise ContractError("sample_conditional called on an unconditioned posterior")
    return g.sample(n_samples, rng, x)


def sample_mdn(m: MdnPosterior, x, n_samples: int, rng: np.random.Generator) -> ThetaBatch:
    return m.sample(n_samples, rng, x)
