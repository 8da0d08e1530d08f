"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

import copy
import math
import os
from pathlib import Path

import numpy as np
import pytest

from hyperbayes.evaluation import sample_predictive
from hyperbayes.experiments import run
from hyperbayes.gradcheck import check_gradients
from hyperbayes.likelihoods import (
    GaussianLikelihood,
    L1Likelihood,
    SseL2Likelihood,
    mc_predictive_loss,
)
from hyperbayes.posterior import Hypernet, LatentSpec, MdnPosterior, per_layer_hypernets
from hyperbayes.primary import MLP, LinearModel, NBeats, NBeatsConfig, ThetaBatch
from hyperbayes.tensor import Tensor, logsumexp, relu
from hyperbayes.trainer import EarlyStopping, TrainConfig, batch_loss, train

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SEEDS = (0, 1, 2)

pytestmark = pytest.mark.slow


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")


_RUNS = {}


def cached_run(tmp_root, name, seed, overrides=None):
    """Run a bundled config once per (name, seed, overrides) for the whole session."""
    key = (name, seed, tuple(sorted((overrides or {}).items())))
    if key not in _RUNS:
        tag = f"{Path(name).stem}_s{seed}_{len(_RUNS)}"
        _RUNS[key] = run(CONFIGS / name, tmp_root / tag, seed=seed, overrides=overrides)
    return _RUNS[key]


@pytest.fixture(scope="session")
def run_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


# -- 1 --------------------------------------------------------------------
def _random_pipeline(rng):
    kind = rng.choice(["linear", "mlp", "nbeats"])
    if kind == "linear":
        primary, d = LinearModel(), 1
    elif kind == "mlp":
        d = int(rng.integers(1, 3))
        primary = MLP([d, int(rng.integers(1, 5)), 1], activation=rng.choice(["relu", "tanh"]))
    else:
        primary = NBeats(NBeatsConfig(input_len=4, horizon=2, blocks=int(rng.integers(1, 3)), fc_width=3,
                                      fc_depth=1, theta_dim=2, shared=bool(rng.integers(2))))
        d = 4
    post_kind = rng.choice(["unconditioned", "conditional", "mdn", "per_layer"])
    lay = primary.layout
    if post_kind == "unconditioned":
        post = Hypernet(lay, [3, 4, lay.total_len], rng, final_scale=1.0)
    elif post_kind == "conditional":
        post = Hypernet(lay, [3, 4, lay.total_len], rng, cond_dim=d, final_scale=1.0)
    elif post_kind == "mdn":
        post = MdnPosterior(lay, d, rng, hidden=[3], init_log_scale=math.log(0.5))
    else:
        post = per_layer_hypernets(lay, [3], rng, latent=LatentSpec(2))
    # zero-initialised biases behind inactive ReLUs can emit an all-zero theta
    # segment, which puts N-BEATS exactly on a ReLU kink; jitter moves off it
    for p in post.parameters():
        p.data = p.data + rng.normal(0.0, 0.1, size=p.shape)
    lik = [GaussianLikelihood(1.5), L1Likelihood(0.8), SseL2Likelihood(0.1)][int(rng.integers(3))]
    mode = "neg_mean_log_prob" if isinstance(lik, SseL2Likelihood) else rng.choice(["neg_log_mean_prob", "mean_prob"])
    n = int(rng.integers(1, 4))
    x = rng.normal(size=(n, d))
    y = rng.normal(size=(n, primary.output_dim))
    return primary, post, lik, mode, x, y


def test_criterion_1_gradient_suite(capsys):
    rng = np.random.default_rng(2024)
    worst, n_configs = 0.0, 0
    for _ in range(120):
        primary, post, lik, mode, x, y = _random_pipeline(rng)
        seed = int(rng.integers(1 << 30))
        f = lambda: batch_loss(primary, post, lik, x, y, 3, np.random.default_rng(seed), mode)
        worst = max(worst, check_gradients(f, post.parameters(), max_entries=6, rng=rng))
        n_configs += 1
    # primitive operations over random operands
    for _ in range(20):
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        c = Tensor(rng.uniform(0.5, 2.0, size=(3, 2)), requires_grad=True)
        f = lambda: logsumexp(relu(a @ b).tanh() + c.log() * c.exp().abs() - c.square(), axis=0).sum()
        worst = max(worst, check_gradients(f, [a, b, c]))
        n_configs += 1
    ok = worst < 1e-5 and n_configs >= 100
    report(capsys, 1, ok, f"max relative error {worst:.2e} over {n_configs} random configurations")
    assert ok


# -- 2 --------------------------------------------------------------------
def test_criterion_2_batched_theta_equivalence(capsys):
    rng = np.random.default_rng(7)
    worst, max_p = 0.0, 0
    for _ in range(100):
        L, B = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        if rng.integers(2):
            d = int(rng.integers(1, 4))
            widths = [d] + [int(w) for w in rng.integers(1, 12, size=rng.integers(1, 3))] + [int(rng.integers(1, 3))]
            primary = MLP(widths, activation=rng.choice(["relu", "tanh"]))
        else:
            d = 6
            primary = NBeats(NBeatsConfig(fc_width=int(rng.integers(2, 8)), fc_depth=2, theta_dim=3))
        P = primary.layout.total_len
        if P > 200:
            continue
        max_p = max(max_p, P)
        g = Hypernet(primary.layout, [4, 8, P], rng, cond_dim=d, final_scale=1.0)
        x = rng.normal(size=(B, d))
        seed = int(rng.integers(1 << 30))
        batched = primary.forward(g.sample(L, np.random.default_rng(seed), x), x).data
        z = g.latent.sample(np.random.default_rng(seed), (L,))
        loop = np.empty_like(batched)
        for l in range(L):
            for b in range(B):
                h = Tensor(np.concatenate([z[l], x[b]])[None])
                theta = ThetaBatch(g.net(h), primary.layout)
                loop[l, b] = primary.forward(theta, x[b:b + 1]).data[0, 0]
        worst = max(worst, float(np.abs(batched - loop).max()))
    ok = worst <= 1e-12
    report(capsys, 2, ok, f"max |batched - loop| = {worst:.1e} (P up to {max_p})")
    assert ok


# -- 3 --------------------------------------------------------------------
def test_criterion_3_mle_collapse(capsys):
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, size=(256, 1))
    y = 2 * x + 1 + rng.normal(0, 0.1, size=(256, 1))
    primary = LinearModel()
    post = Hypernet(primary.layout, "[4,16,P]", np.random.default_rng(4))
    post.freeze_inputs()

    class Data:
        pass

    data = Data()
    data.x, data.y = x, y
    cfg = TrainConfig(epochs=400, batch_size=256, mc_samples=10, lr=0.02, early_stopping=EarlyStopping(enabled=False))
    train(primary, post, GaussianLikelihood(0.1), data, cfg)
    ols = np.linalg.lstsq(np.column_stack([x[:, 0], np.ones(256)]), y[:, 0], rcond=None)[0]
    theta = post.sample(1, np.random.default_rng(5)).values.data[0]
    fan = sample_predictive(primary, post, np.linspace(-1, 1, 50), 30, np.random.default_rng(6))
    err = float(np.abs(theta - ols).max())
    width = float(fan.band_width.max())
    ok = err < 1e-2 and width < 1e-9
    report(capsys, 3, ok, f"|theta - OLS| = {err:.2e}, fan band width = {width:.1e}")
    assert ok


# -- 4 --------------------------------------------------------------------
def test_criterion_4_linear_primary_complexity(capsys, run_root):
    cond = cached_run(run_root, "xsinx_linear_conditional.cfg", 0).metrics
    uncond = cached_run(run_root, "xsinx_linear_unconditioned.cfg", 0).metrics
    fit = cond["train_rmse_median_base"]
    gain = uncond["line_rmse_base"] - uncond["train_rmse_median_base"]
    ok = fit < 0.25 and gain <= 0.02
    report(capsys, 4, ok, f"conditional RMSE {fit:.3f} (< 0.25); unconditioned beats best line by {gain:.3f} (<= 0.02)")
    assert ok


# -- 5 --------------------------------------------------------------------
def test_criterion_5_multimodality(capsys, run_root):
    rows = []
    for name in ("multimodal_l1.cfg", "multimodal_labeled.cfg"):
        for seed in SEEDS:
            m = cached_run(run_root, name, seed).metrics
            rows.append((name, seed, m["bimodal_fraction_overlap"], m["unimodal_fraction_outside"]))
    ok = all(b >= 0.8 and u >= 0.8 for _, _, b, u in rows)
    detail = "; ".join(f"{Path(n).stem} s{s}: {b:.0%}/{u:.0%}" for n, s, b, u in rows)
    report(capsys, 5, ok, f"bimodal-inside/unimodal-outside: {detail}")
    assert ok


# -- 6 --------------------------------------------------------------------
def test_criterion_6_forecast_ordering(capsys, run_root):
    wins, parts = 0, []
    for seed in SEEDS:
        c = cached_run(run_root, "forecast_conditional.cfg", seed).metrics
        u = cached_run(run_root, "forecast_unconditioned.cfg", seed).metrics
        ordered = c["rmse"] < u["rmse"] < u["naive_rmse"]
        wins += ordered
        parts.append(f"s{seed}: {c['rmse']:.3f} < {u['rmse']:.3f} < {u['naive_rmse']:.3f} {'yes' if ordered else 'no'}")
    ok = wins >= 2
    report(capsys, 6, ok, f"{wins}/3 seeds ordered ({'; '.join(parts)})")
    assert ok


REFERENCE_RMSE = {"naive": 4.47, "forecast_point": 2.87, "forecast_unconditioned": 1.86, "forecast_conditional": 1.35}


@pytest.mark.skipif(not os.environ.get("HYPERBAYES_ENGLAND_CSV"), reason="set HYPERBAYES_ENGLAND_CSV to the series CSV")
def test_criterion_6_reference_values(capsys, run_root):
    series = os.environ["HYPERBAYES_ENGLAND_CSV"]
    got = {}
    for name in ("forecast_point", "forecast_unconditioned", "forecast_conditional"):
        m = cached_run(run_root, f"reference/{name}.cfg", 0, {"data.series": series}).metrics
        got[name] = m["rmse"]
        got["naive"] = m["naive_rmse"]
    close = all(abs(got[k] - v) <= 0.25 * v for k, v in REFERENCE_RMSE.items())
    ranked = sorted(got, key=got.get) == sorted(REFERENCE_RMSE, key=REFERENCE_RMSE.get)
    ok = close and ranked
    report(capsys, "6 (reference data)", ok, ", ".join(f"{k} {got[k]:.2f} vs {v}" for k, v in REFERENCE_RMSE.items()))
    assert ok


# -- 7 --------------------------------------------------------------------
def test_criterion_7_mc_estimator_spread(capsys):
    rng = np.random.default_rng(11)
    primary = MLP([1, 8, 1])
    post = Hypernet(primary.layout, "[4,16,P]", rng, final_scale=1.0)
    x = rng.normal(size=(16, 1))
    y = np.sin(x)
    lik = GaussianLikelihood(1.0)
    stream = np.random.default_rng(12)

    def spread(L):
        values = [batch_loss(primary, post, lik, x, y, L, stream, "mean_prob").item() for _ in range(200)]
        return float(np.std(values, ddof=1))

    ratio = spread(1) / spread(10)
    ok = abs(ratio / math.sqrt(10) - 1) <= 0.2
    report(capsys, 7, ok, f"std(L=1)/std(L=10) = {ratio:.3f}, target {math.sqrt(10):.3f} +/- 20%")
    assert ok


# -- 8 --------------------------------------------------------------------
def test_criterion_8_underflow_stability(capsys):
    rng = np.random.default_rng(13)
    ll = Tensor(-1e4 - rng.uniform(0, 1e5, size=(10, 32)), requires_grad=True)
    loss = mc_predictive_loss(ll)
    loss.backward()
    literal = mc_predictive_loss(ll.data, "mean_prob").item()
    ok = bool(np.isfinite(loss.item()) and np.all(np.isfinite(ll.grad)))
    report(capsys, 8, ok, f"loss {loss.item():.1f} with all log-likelihoods <= -1e4 (literal form gives {literal})")
    assert ok


# -- 9 --------------------------------------------------------------------
# The reference forecasting configs are run for one epoch: their conditional
# variant costs about ten seconds per epoch on one core.
DETERMINISM = [(str(p.relative_to(CONFIGS)), {}) for p in sorted(CONFIGS.glob("*.cfg"))]
DETERMINISM += [(str(p.relative_to(CONFIGS)), {"train.epochs": 1}) for p in sorted((CONFIGS / "reference").glob("*.cfg"))]


def test_criterion_9_determinism(capsys, run_root):
    mismatched = []
    for name, over in DETERMINISM:
        first = cached_run(run_root, name, 0, over).files["metrics"].read_bytes()
        tag = run_root / f"repeat_{Path(name).stem}_{len(over)}"
        second = run(CONFIGS / name, tag, seed=0, overrides=copy.deepcopy(over)).files["metrics"].read_bytes()
        if first != second:
            mismatched.append(name)
    ok = not mismatched
    report(capsys, 9, ok, f"{len(DETERMINISM) - len(mismatched)}/{len(DETERMINISM)} configs byte-identical"
           + (f"; differing: {mismatched}" if mismatched else ""))
    assert ok
