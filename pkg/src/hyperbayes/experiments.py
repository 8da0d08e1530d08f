"""Declarative experiments: config parsing, validation, model building and run directories.

A config file is a flat list of ``key = value`` lines. ``#`` starts a
comment, blank lines are ignored and values are typed by the schema below.
Architecture values use bracket notation, e.g. ``posterior.arch = [4,16,P]``
where ``P`` stands for the primary model's parameter count. Every key other
than ``experiment`` has a default, and some defaults depend on the
experiment kind (see :data:`KIND_DEFAULTS`).

A run writes into its output directory::

    config.echo       resolved configuration, one key per line
    train_curve.csv   epoch, train_loss, val_loss, seconds
    fan.csv           predictive samples and summaries on the test inputs
    data.csv          the (standardised) training data
    metrics.json      deterministic metrics only
    manifest.json     layout version, seed, wall clock and epoch timings
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

import numpy as np

from . import __version__
from .datasets import (
    DEFAULT_TRAIN_FRACTION,
    RegressionDataset,
    gen_multimodal,
    gen_xsinx,
    load_csv_series,
    multimodal_curves,
    split,
    standardize_windows,
    synthetic_seasonal_series,
    window_series,
)
from .errors import ConfigError, ContractError, HyperBayesError
from .evaluation import (
    PredictiveFan,
    detect_bimodality,
    forecast_metrics,
    naive_forecast,
    rmse,
    sample_predictive,
)
from .likelihoods import LOSS_MODES, GaussianLikelihood, L1Likelihood, SseL2Likelihood
from .posterior import Hypernet, LatentSpec, MdnPosterior, PointPosterior, parse_arch, per_layer_hypernets
from .primary import MLP, LinearModel, NBeats, NBeatsConfig
from .trainer import EarlyStopping, TrainConfig, TrainReport, train

logger = logging.getLogger(__name__)

RUN_LAYOUT_VERSION = 1

EXPERIMENTS = ("xsinx", "xsinx_linear_primary", "multimodal_l1", "multimodal_labeled", "forecast")
PRIMARIES = ("mlp", "linear", "nbeats")
POSTERIORS = ("conditional", "unconditioned", "mdn", "point")
LIKELIHOODS = ("gaussian", "l1", "sse_l2")


# -- schema ---------------------------------------------------------------
def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _parse_optional_float(text: str):
    return None if text.lower() in ("none", "null", "") else float(text)


def _parse_arch(text: str) -> str:
    parse_arch(text, target_len=1)  # syntax check; P is resolved later
    return "[" + ",".join(t.strip() for t in text.strip()[1:-1].split(",")) + "]"


def _parse_str(text: str) -> str:
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


@dataclass(frozen=True)
class Field:
    parse: Callable[[str], Any]
    default: Any
    choices: tuple | None = None
    check: Callable[[Any], str | None] | None = None
    doc: str = ""


def _positive(v):
    return None if v > 0 else "must be positive"


def _non_negative(v):
    return None if v >= 0 else "must be non-negative"


def _fraction(v):
    return None if 0.0 <= v < 1.0 else "must lie in [0, 1)"


def _open_unit(v):
    return None if 0.0 < v < 1.0 else "must lie in (0, 1)"


def _opt_positive(v):
    return None if v is None or v > 0 else "must be positive or none"


SCHEMA: dict[str, Field] = {
    "experiment": Field(_parse_str, None, EXPERIMENTS, doc="experiment kind"),
    "seed": Field(int, 0, check=_non_negative),
    "out_dir": Field(_parse_str, "", doc="run directory; empty means runs/<experiment>"),
    # primary model
    "primary": Field(_parse_str, "mlp", PRIMARIES),
    "primary.arch": Field(_parse_arch, "[1,512,1]", doc="MLP widths including input and output"),
    "primary.activation": Field(_parse_str, "relu", ("relu", "tanh")),
    "primary.dropout": Field(float, 0.0, check=_fraction),
    "nbeats.blocks": Field(int, 3, check=_positive),
    "nbeats.fc_width": Field(int, 64, check=_positive),
    "nbeats.fc_depth": Field(int, 4, check=_positive),
    "nbeats.theta_dim": Field(int, 32, check=_positive),
    "nbeats.shared": Field(_parse_bool, True),
    # posterior model
    "posterior": Field(_parse_str, "conditional", POSTERIORS),
    "posterior.arch": Field(_parse_arch, "[4,16,P]", doc="first width is the latent dim (MDN: the input width)"),
    "posterior.latent": Field(_parse_str, "uniform", ("uniform", "normal")),
    "posterior.output_bound": Field(_parse_optional_float, None, check=_opt_positive),
    "posterior.per_layer": Field(_parse_bool, False),
    "posterior.final_scale": Field(float, 0.1, check=_positive),
    # likelihood
    "likelihood": Field(_parse_str, "gaussian", LIKELIHOODS),
    "likelihood.sigma": Field(float, 0.01, check=_positive),
    "likelihood.scale": Field(float, 1.0, check=_positive),
    "likelihood.lambda": Field(float, 0.0, check=_non_negative),
    # training
    "train.epochs": Field(int, 1000, check=_positive),
    "train.batch_size": Field(int, 128, check=_positive),
    "train.mc_samples": Field(int, 10, check=_positive),
    "train.optimizer": Field(_parse_str, "adam", ("adam", "sgd")),
    "train.lr": Field(float, 1e-2, check=_positive),
    "train.loss_mode": Field(_parse_str, "neg_log_mean_prob", LOSS_MODES),
    "train.clip_norm": Field(_parse_optional_float, None, check=_opt_positive),
    "early_stopping.enabled": Field(_parse_bool, True),
    "early_stopping.val_fraction": Field(float, 0.1, check=_fraction),
    "early_stopping.patience": Field(int, 20, check=_non_negative),
    "early_stopping.min_delta": Field(float, 1e-4, check=_non_negative),
    # data
    "data.n_base": Field(int, 32, check=_positive),
    "data.grid": Field(_parse_bool, False),
    "data.n": Field(int, 128, check=_positive),
    "data.noise_var": Field(float, 0.01, check=_non_negative),
    "data.series": Field(_parse_str, "synthetic", doc="'synthetic' or a CSV path (relative to the config file)"),
    "data.length": Field(int, 2976, check=_positive),
    "data.period": Field(int, 12, check=_positive),
    "data.amplitude": Field(float, 6.0),
    "data.trend": Field(float, 1.0),
    "data.noise": Field(float, 1.0, check=_non_negative),
    "data.level": Field(float, 9.0),
    "data.input_len": Field(int, 6, check=_positive),
    "data.horizon": Field(int, 3, check=_positive),
    "data.train_fraction": Field(float, DEFAULT_TRAIN_FRACTION, check=_open_unit),
    # evaluation
    "eval.samples": Field(int, 30, check=_positive),
    "eval.n_test": Field(int, 1024, check=_positive),
    "eval.label_mode": Field(_parse_str, "per_sample", ("per_sample", "per_point")),
}

KIND_DEFAULTS: dict[str, dict[str, Any]] = {
    "xsinx": {"train.batch_size": 36},
    "xsinx_linear_primary": {"primary": "linear", "train.batch_size": 36},
    "multimodal_l1": {"likelihood": "l1", "primary.arch": "[1,64,1]", "eval.n_test": 200},
    "multimodal_labeled": {"primary.arch": "[1,64,1]", "likelihood.sigma": 0.1, "eval.n_test": 200},
    "forecast": {"primary": "nbeats", "train.epochs": 100, "likelihood.sigma": 0.25},
}


@dataclass(frozen=True)
class Issue:
    field: str
    message: str
    line: int | None = None

    def __str__(self):
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{where}{self.field}: {self.message}"


@dataclass
class ExperimentConfig:
    """Resolved settings plus the line each explicit key came from."""

    values: dict[str, Any]
    lines: dict[str, int | None] = field(default_factory=dict)
    source: Path | None = None

    def __getitem__(self, key):
        return self.values[key]

    @property
    def kind(self) -> str:
        return self.values["experiment"]

    def line(self, key) -> int | None:
        return self.lines.get(key)

    def echo(self) -> str:
        return "".join(f"{k} = {_format_value(self.values[k])}\n" for k in SCHEMA)


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _strip_comment(line: str) -> str:
    quote = None
    for i, ch in enumerate(line):
        if ch in "\"'":
            quote = None if quote == ch else (ch if quote is None else quote)
        elif ch == "#" and quote is None:
            return line[:i]
    return line


def parse_config_text(text: str, source: Path | None = None,
                      overrides: Mapping[str, Any] | None = None) -> tuple[ExperimentConfig, list[Issue]]:
    """Parse config text into an :class:`ExperimentConfig` and a list of problems found so far."""
    issues: list[Issue] = []
    raw: dict[str, tuple[str, int | None]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line).strip()
        if not body:
            continue
        if "=" not in body:
            issues.append(Issue("<syntax>", f"expected 'key = value', got {body!r}", lineno))
            continue
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in SCHEMA:
            issues.append(Issue(key, "unknown key", lineno))
            continue
        if key in raw:
            issues.append(Issue(key, f"duplicate key (first set on line {raw[key][1]})", lineno))
            continue
        raw[key] = (value, lineno)
    for key, value in (overrides or {}).items():
        if key not in SCHEMA:
            issues.append(Issue(key, "unknown key (override)"))
            continue
        raw[key] = (str(value), None)

    values: dict[str, Any] = {}
    lines: dict[str, int | None] = {}
    for key, (text_value, lineno) in raw.items():
        spec = SCHEMA[key]
        try:
            value = spec.parse(text_value)
        except (ValueError, ContractError) as exc:
            issues.append(Issue(key, f"cannot parse {text_value!r}: {exc}", lineno))
            continue
        if spec.choices and value not in spec.choices:
            issues.append(Issue(key, f"must be one of {', '.join(spec.choices)}; got {value!r}", lineno))
            continue
        problem = spec.check(value) if spec.check else None
        if problem:
            issues.append(Issue(key, f"{problem}, got {value!r}", lineno))
            continue
        values[key] = value
        lines[key] = lineno

    kind = values.get("experiment")
    if kind is None and "experiment" not in {i.field for i in issues}:
        issues.append(Issue("experiment", f"required; one of {', '.join(EXPERIMENTS)}"))
    resolved = {k: f.default for k, f in SCHEMA.items()}
    if kind in KIND_DEFAULTS:
        resolved.update(KIND_DEFAULTS[kind])
    resolved.update(values)
    return ExperimentConfig(resolved, lines, source), issues


# -- model construction ---------------------------------------------------
def cond_width(cfg: ExperimentConfig) -> int:
    """Conditioning columns a conditional posterior receives for this experiment."""
    if cfg.kind == "forecast":
        return cfg["data.input_len"]
    if cfg.kind == "multimodal_labeled":
        return 2
    return 1


def build_primary(cfg: ExperimentConfig):
    kind = cfg["primary"]
    if kind == "linear":
        return LinearModel(1, 1)
    if kind == "mlp":
        return MLP(parse_arch(cfg["primary.arch"]), cfg["primary.activation"], cfg["primary.dropout"])
    return NBeats(NBeatsConfig(
        input_len=cfg["data.input_len"],
        horizon=cfg["data.horizon"],
        blocks=cfg["nbeats.blocks"],
        fc_width=cfg["nbeats.fc_width"],
        fc_depth=cfg["nbeats.fc_depth"],
        theta_dim=cfg["nbeats.theta_dim"],
        shared=cfg["nbeats.shared"],
    ))


def build_posterior(cfg: ExperimentConfig, primary, rng: np.random.Generator):
    layout = primary.layout
    init = primary.init_theta(rng)
    kind = cfg["posterior"]
    if kind == "point":
        return PointPosterior(layout, init)
    cond = cond_width(cfg) if kind in ("conditional", "mdn") else 0
    if kind == "mdn":
        widths = parse_arch(cfg["posterior.arch"], layout.total_len)
        return MdnPosterior(layout, cond, rng, hidden=widths[1:-1], init_theta=init)
    widths = parse_arch(cfg["posterior.arch"], layout.total_len)
    latent = LatentSpec(dim=widths[0], base=cfg["posterior.latent"])
    if cfg["posterior.per_layer"]:
        return per_layer_hypernets(layout, widths[1:-1], rng, latent, cond, init)
    return Hypernet(layout, widths, rng, latent=latent, cond_dim=cond, output_bound=cfg["posterior.output_bound"],
                    init_theta=init, final_scale=cfg["posterior.final_scale"])


def build_likelihood(cfg: ExperimentConfig):
    kind = cfg["likelihood"]
    if kind == "gaussian":
        return GaussianLikelihood(cfg["likelihood.sigma"])
    if kind == "l1":
        return L1Likelihood(cfg["likelihood.scale"])
    return SseL2Likelihood(cfg["likelihood.lambda"])


def build_train_config(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(
        epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch_size"],
        mc_samples=cfg["train.mc_samples"],
        optimizer=cfg["train.optimizer"],
        lr=cfg["train.lr"],
        loss_mode=cfg["train.loss_mode"],
        clip_norm=cfg["train.clip_norm"],
        seed=cfg["seed"],
        early_stopping=EarlyStopping(
            enabled=cfg["early_stopping.enabled"],
            val_fraction=cfg["early_stopping.val_fraction"],
            patience=cfg["early_stopping.patience"],
            min_delta=cfg["early_stopping.min_delta"],
        ),
    )


def _series_path(cfg: ExperimentConfig) -> Path | None:
    if cfg["data.series"] == "synthetic":
        return None
    path = Path(cfg["data.series"]).expanduser()
    if not path.is_absolute() and cfg.source is not None:
        path = cfg.source.parent / path
    return path


# -- validation -----------------------------------------------------------
def check_config(cfg: ExperimentConfig) -> list[Issue]:
    """Cross-field checks; cheap (no data generation or training)."""
    issues: list[Issue] = []

    def add(key, message):
        issues.append(Issue(key, message, cfg.line(key)))

    kind = cfg.kind
    if kind not in EXPERIMENTS:
        return issues
    primary_kind = cfg["primary"]
    if kind == "forecast" and primary_kind != "nbeats":
        add("primary", "forecast experiments need the nbeats primary")
    if kind != "forecast" and primary_kind == "nbeats":
        add("primary", f"nbeats needs windowed series input, not the {kind} data")
    if kind == "xsinx_linear_primary" and primary_kind != "linear":
        add("primary", "xsinx_linear_primary uses the linear primary")

    primary = None
    try:
        primary = build_primary(cfg)
    except ContractError as exc:
        add("primary.arch" if primary_kind == "mlp" else "primary", str(exc))
    if primary is not None and primary_kind == "mlp":
        if primary.input_dim != 1 or primary.output_dim != 1:
            add("primary.arch", f"this experiment has scalar inputs and outputs, got {cfg['primary.arch']}")

    post = cfg["posterior"]
    if kind == "multimodal_labeled" and post not in ("conditional", "mdn"):
        add("posterior", "labels are conditioning inputs, so the posterior must be conditional or mdn")
    if post == "mdn" and cfg["posterior.per_layer"]:
        add("posterior.per_layer", "per-layer composition applies to hypernet posteriors only")
    if post == "point" and cfg["posterior.per_layer"]:
        add("posterior.per_layer", "a point posterior has no layers to split")
    if primary is not None and post != "point":
        P = primary.layout.total_len
        try:
            widths = parse_arch(cfg["posterior.arch"], P)
        except ContractError as exc:
            add("posterior.arch", str(exc))
        else:
            tokens = cfg["posterior.arch"][1:-1].split(",")
            if cfg["posterior.per_layer"]:
                if tokens[-1].strip().upper() not in ("P", "N"):
                    add("posterior.arch", "per-layer posteriors need the output width written as P")
            elif widths[-1] != P:
                add("posterior.arch",
                    f"posterior output length {widths[-1]} does not match primary parameter length {P}")
            if post == "mdn" and widths[0] != cond_width(cfg):
                add("posterior.arch",
                    f"MDN input width {widths[0]} does not match the {cond_width(cfg)} conditioning columns")
    if post == "mdn" and cfg["posterior.output_bound"] is not None:
        add("posterior.output_bound", "output bounds apply to hypernet posteriors only")

    if kind == "forecast":
        path = _series_path(cfg)
        if path is not None and not path.is_file():
            add("data.series", f"file not found: {path}")
        length = cfg["data.length"] if path is None else None
        need = cfg["data.input_len"] + cfg["data.horizon"]
        if length is not None:
            if length < need:
                add("data.length", f"series of {length} is shorter than one window ({need})")
            else:
                m = length - need + 1
                cut = int(round(cfg["data.train_fraction"] * m))
                if cut == 0 or cut == m:
                    add("data.train_fraction", "split leaves an empty partition")
    if kind in ("multimodal_l1", "multimodal_labeled") and cfg["data.n"] % 2:
        add("data.n", "must be even so both branches get the same count")
    return issues


def load_config(path, overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
    """Read and fully validate a config file; raises :class:`ConfigError` listing all problems."""
    cfg, issues = validate_text(Path(path).read_text(), Path(path), overrides)
    if issues:
        raise ConfigError(issues)
    return cfg


def validate_text(text: str, source: Path | None = None, overrides=None) -> tuple[ExperimentConfig, list[Issue]]:
    cfg, issues = parse_config_text(text, source, overrides)
    if not issues:
        issues = check_config(cfg)
    return cfg, issues


def validate(path, overrides: Mapping[str, Any] | None = None) -> list[Issue]:
    """Problems found in a config file (empty when it is runnable). Has no side effects."""
    path = Path(path)
    if not path.is_file():
        return [Issue("<file>", f"not found: {path}")]
    return validate_text(path.read_text(), path, overrides)[1]


# -- running --------------------------------------------------------------
@dataclass
class RunArtifacts:
    out_dir: Path
    metrics: dict
    report: TrainReport
    fan: PredictiveFan
    files: dict[str, Path]


def _rngs(seed: int):
    data, init, evaluation = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(data), np.random.default_rng(init), np.random.default_rng(evaluation)


def _ols_line_rmse(x, y) -> float:
    X = np.column_stack([np.ravel(x), np.ones(len(x))])
    beta = np.linalg.lstsq(X, np.ravel(y), rcond=None)[0]
    return rmse(X @ beta, np.ravel(y))


def _train_summary(report: TrainReport) -> dict:
    return {
        "epochs_run": report.epochs_run,
        "best_epoch": report.best_epoch,
        "stopped_early": report.stopped_early,
        "final_train_loss": report.train_loss[-1],
        "best_val_loss": None if np.isnan(report.val_loss[report.best_epoch]) else report.val_loss[report.best_epoch],
    }


def _run_xsinx(cfg, primary, posterior, likelihood, data_rng, eval_rng):
    raw = gen_xsinx(cfg["data.n_base"], rng=data_rng, grid=cfg["data.grid"], n_test=cfg["eval.n_test"])
    data = raw.standardize()
    report = train(primary, posterior, likelihood, data, build_train_config(cfg))
    fan = sample_predictive(primary, posterior, data.x_test, cfg["eval.samples"], eval_rng)
    fit = sample_predictive(primary, posterior, data.x, cfg["eval.samples"], eval_rng)
    n = cfg["data.n_base"]
    metrics = {
        "train_rmse_mean": rmse(fit.mean, data.y),
        "train_rmse_median": rmse(fit.q50, data.y),
        "train_rmse_mean_base": rmse(fit.mean[:n], data.y[:n]),
        "train_rmse_median_base": rmse(fit.q50[:n], data.y[:n]),
        "line_rmse_base": _ols_line_rmse(data.x[:n], data.y[:n]),
        "test_band_width_mean": float(fan.band_width.mean()),
        "train_band_width_mean": float(fit.band_width.mean()),
    }
    return data, report, fan, metrics


def _run_multimodal(cfg, primary, posterior, likelihood, data_rng, eval_rng):
    raw = gen_multimodal(cfg["data.n"], cfg["data.noise_var"], rng=data_rng, n_test=cfg["eval.n_test"])
    data = raw.standardize()
    labeled = cfg.kind == "multimodal_labeled"
    if not labeled:
        data = RegressionDataset(data.x, data.y, x_test=data.x_test, x_scaler=data.x_scaler, y_scaler=data.y_scaler)
    report = train(primary, posterior, likelihood, data, build_train_config(cfg))
    L = cfg["eval.samples"]
    labels = None
    if labeled:
        if cfg["eval.label_mode"] == "per_point":
            labels = raw.labels_test
        else:
            # one fair coin per predictive curve
            coins = eval_rng.integers(0, 2, size=(L, 1, 1)).astype(float)
            labels = np.broadcast_to(coins, (L, len(data.x_test), 1))
    fan = sample_predictive(primary, posterior, data.x_test, L, eval_rng, labels=labels)
    x = raw.x_test.ravel()
    lo, hi = (data.y_scaler.transform(c[:, None]).ravel() for c in multimodal_curves(x))
    modes = np.array([detect_bimodality(fan.samples[:, i, 0], (lo[i], hi[i])) for i in range(len(x))])
    inside = (x > 0.35) & (x < 0.55)
    outside = (x < 0.25) | (x > 0.7)
    metrics = {
        "bimodal_fraction_overlap": float(np.mean(modes[inside] == "bimodal")),
        "unimodal_fraction_outside": float(np.mean(modes[outside] == "unimodal")),
        "n_overlap": int(inside.sum()),
        "n_outside": int(outside.sum()),
        "test_band_width_mean": float(fan.band_width.mean()),
    }
    return data, report, fan, metrics


def _run_forecast(cfg, primary, posterior, likelihood, data_rng, eval_rng):
    path = _series_path(cfg)
    if path is None:
        series = synthetic_seasonal_series(cfg["data.length"], cfg["data.period"], cfg["data.amplitude"],
                                           cfg["data.trend"], cfg["data.noise"], cfg["data.level"], rng=data_rng)
    else:
        series = load_csv_series(path)
    windows = split(window_series(series, cfg["data.input_len"], cfg["data.horizon"]), cfg["data.train_fraction"])
    scaled, scaler = standardize_windows(windows)
    report = train(primary, posterior, likelihood, scaled.train, build_train_config(cfg))
    test_raw = windows.test
    fan_std = sample_predictive(primary, posterior, scaled.test.inputs, cfg["eval.samples"], eval_rng)
    fan = PredictiveFan.from_samples(test_raw.inputs, scaler.inverse(fan_std.samples))
    model = forecast_metrics(fan.mean, test_raw.targets)
    naive = forecast_metrics(naive_forecast(test_raw.inputs, cfg["data.horizon"]), test_raw.targets)
    metrics = dict(model)
    metrics.update({f"naive_{k}": v for k, v in naive.items() if k != "n_windows"})
    metrics.update({
        "n_pairs": len(windows),
        "n_train": windows.split,
        "n_test": len(windows) - windows.split,
        "test_band_width_mean": float(fan.band_width.mean()),
    })
    data = RegressionDataset(scaled.train.inputs, scaled.train.targets)
    return data, report, fan, metrics


_RUNNERS = {
    "xsinx": _run_xsinx,
    "xsinx_linear_primary": _run_xsinx,
    "multimodal_l1": _run_multimodal,
    "multimodal_labeled": _run_multimodal,
    "forecast": _run_forecast,
}


def run(config, out_dir=None, seed: int | None = None, overrides: Mapping[str, Any] | None = None) -> RunArtifacts:
    """Validate, train, evaluate and write a run directory.

    ``config`` is a path or an :class:`ExperimentConfig`. ``seed`` and
    ``out_dir`` override the file's values.
    """
    overrides = dict(overrides or {})
    if seed is not None:
        overrides["seed"] = seed
    if isinstance(config, ExperimentConfig):
        text = config.echo()
        cfg, issues = validate_text(text, config.source, overrides)
        if issues:
            raise ConfigError(issues)
    else:
        cfg = load_config(config, overrides)
    out = Path(out_dir or cfg["out_dir"] or Path("runs") / cfg.kind)
    out.mkdir(parents=True, exist_ok=True)

    started = time.time()
    data_rng, init_rng, eval_rng = _rngs(cfg["seed"])
    primary = build_primary(cfg)
    posterior = build_posterior(cfg, primary, init_rng)
    likelihood = build_likelihood(cfg)
    data, report, fan, metrics = _RUNNERS[cfg.kind](cfg, primary, posterior, likelihood, data_rng, eval_rng)

    metrics = {
        "experiment": cfg.kind,
        "seed": cfg["seed"],
        "primary_parameters": primary.layout.total_len,
        **metrics,
        **_train_summary(report),
    }
    files = {
        "config": out / "config.echo",
        "train_curve": out / "train_curve.csv",
        "fan": out / "fan.csv",
        "data": out / "data.csv",
        "metrics": out / "metrics.json",
        "manifest": out / "manifest.json",
    }
    files["config"].write_text(cfg.echo())
    report.to_csv(files["train_curve"])
    fan.to_csv(files["fan"])
    data.to_csv(files["data"])
    files["metrics"].write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    manifest = {
        "layout_version": RUN_LAYOUT_VERSION,
        "package_version": __version__,
        "experiment": cfg.kind,
        "seed": cfg["seed"],
        "config_source": None if cfg.source is None else str(cfg.source),
        "started_unix": started,
        "wall_clock_seconds": time.time() - started,
        "epoch_seconds": report.seconds,
        "epoch_seconds_mean": float(np.mean(report.seconds)),
        "units": "original" if cfg.kind == "forecast" else "standardised",
        "files": {k: p.name for k, p in files.items()},
    }
    files["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logger.info("run written to %s", out)
    return RunArtifacts(out, metrics, report, fan, files)


# -- architecture sweep ---------------------------------------------------
def sweep(config, archs: Iterable[str], mc_samples: Iterable[int], out_dir, seed: int | None = None,
          overrides: Mapping[str, Any] | None = None) -> list[dict]:
    """Run one config over a grid of posterior architectures and training sample counts.

    Each cell gets its own sub-directory; a summary ``sweep.csv`` is written
    to ``out_dir``. ``overrides`` apply to every cell. Returns one metrics
    dict per cell.
    """
    out_dir = Path(out_dir)
    rows = []
    for arch in archs:
        for L in mc_samples:
            tag = f"arch{arch.strip('[]').replace(',', '-')}_L{L}"
            cell = {**(overrides or {}), "posterior.arch": arch, "train.mc_samples": L}
            res = run(config, out_dir / tag, seed, cell)
            rows.append({"arch": arch, "mc_samples": L, **res.metrics})
    keys = sorted({k for r in rows for k in r})
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)
    return rows


__all__ = [
    "EXPERIMENTS",
    "SCHEMA",
    "KIND_DEFAULTS",
    "ExperimentConfig",
    "Issue",
    "RunArtifacts",
    "HyperBayesError",
    "build_primary",
    "build_posterior",
    "build_likelihood",
    "build_train_config",
    "check_config",
    "load_config",
    "parse_config_text",
    "validate",
    "validate_text",
    "run",
    "sweep",
]
