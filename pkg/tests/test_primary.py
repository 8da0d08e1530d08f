import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperbayes.errors import ContractError
from hyperbayes.gradcheck import check_gradients
from hyperbayes.primary import (
    MLP,
    LinearModel,
    NBeats,
    NBeatsConfig,
    ThetaBatch,
    ThetaLayout,
    linear_forward,
    mlp_forward,
    nbeats_forward,
)
from hyperbayes.tensor import Tensor


def theta_from(layout, **parts):
    """Flat theta (1, P) with the named segments set and everything else zero."""
    flat = np.zeros(layout.total_len)
    for name, value in parts.items():
        lo, hi = layout.span(name.replace("__", "."))
        flat[lo:hi] = np.asarray(value, dtype=float).ravel()
    return ThetaBatch(Tensor(flat[None]), layout)


# -- layout ---------------------------------------------------------------
def test_layout_lengths():
    lay = ThetaLayout([("W", (3, 2)), ("b", (3,)), ("v", (1, 3))])
    assert lay.total_len == 12
    assert lay.span("b") == (6, 9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 4), st.integers(1, 4)), min_size=1, max_size=5),
       st.integers(1, 3), st.integers(0, 1000))
def test_layout_round_trip_exact(shapes, lead, seed):
    lay = ThetaLayout([(f"s{i}", s) for i, s in enumerate(shapes)])
    theta = np.random.default_rng(seed).normal(size=(lead, lay.total_len))
    back = lay.flatten(lay.slice(theta)).data
    assert np.array_equal(back, theta)


def test_layout_rejects_bad_segments():
    with pytest.raises(ContractError):
        ThetaLayout([("a", (2,)), ("a", (3,))])
    with pytest.raises(ContractError):
        ThetaLayout([("a", (0,))])


def test_theta_batch_trailing_extent():
    with pytest.raises(ContractError):
        ThetaBatch(Tensor(np.zeros((2, 5))), LinearModel().layout)


# -- linear ---------------------------------------------------------------
def test_linear_zero_weights_constant():
    m = LinearModel(2, 1)
    out = m.forward(theta_from(m.layout, b=[1.7]), np.random.default_rng(0).normal(size=(5, 2)))
    np.testing.assert_array_equal(out.data, np.full((1, 5, 1), 1.7))


def test_linear_affine_arithmetic():
    m = LinearModel()
    assert linear_forward(theta_from(m.layout, W=[2.0], b=[1.0]), [[3.0]]).item() == 7.0


def test_linear_conditional_equals_scalar_loop():
    rng = np.random.default_rng(1)
    m = LinearModel()
    x = rng.normal(size=(6, 1))
    theta = rng.normal(size=(3, 6, 2))
    out = m.forward(ThetaBatch(Tensor(theta), m.layout), x).data
    for l in range(3):
        for b in range(6):
            w, c = theta[l, b]
            assert abs(out[l, b, 0] - (w * x[b, 0] + c)) <= 1e-12


def test_linear_layout_mismatch():
    m = LinearModel()
    with pytest.raises(ContractError):
        m.forward(ThetaBatch(Tensor(np.zeros((1, 4))), MLP([1, 1, 1]).layout), [[1.0]])


# -- MLP ------------------------------------------------------------------
def test_mlp_degenerate_construction_constant():
    m = MLP([1, 8, 1])
    theta = theta_from(m.layout, **{"layer0__b": np.random.default_rng(2).normal(size=8), "layer1__b": [-0.4]})
    out = mlp_forward(theta, np.linspace(-3, 3, 9)[:, None], [1, 8, 1])
    np.testing.assert_array_equal(out.data, np.full((1, 9, 1), -0.4))


def test_mlp_relu_gate_closed():
    m = MLP([1, 1, 1])
    theta = theta_from(m.layout, **{"layer0__W": [1.0], "layer0__b": [0.0], "layer1__W": [1.0], "layer1__b": [0.0]})
    assert m.forward(theta, [[-2.0]]).item() == 0.0
    assert m.forward(theta, [[2.0]]).item() == 2.0


def _looped(model, theta, x):
    L, B, _ = theta.shape
    out = np.empty((L, B, model.output_dim))
    for l in range(L):
        for b in range(B):
            single = ThetaBatch(Tensor(theta[l, b][None]), model.layout)
            out[l, b] = model.forward(single, x[b:b + 1]).data[0, 0]
    return out


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(1, 6), st.integers(0, 10_000))
def test_mlp_batched_equals_loop(L, B, hidden, seed):
    rng = np.random.default_rng(seed)
    m = MLP([2, hidden, 3, 2], activation="tanh" if seed % 2 else "relu")
    theta = rng.normal(size=(L, B, m.layout.total_len))
    x = rng.normal(size=(B, 2))
    out = m.forward(ThetaBatch(Tensor(theta), m.layout), x).data
    assert np.abs(out - _looped(m, theta, x)).max() <= 1e-12


def test_mlp_unconditioned_equals_per_sample():
    rng = np.random.default_rng(3)
    m = MLP([1, 5, 1])
    theta = rng.normal(size=(4, m.layout.total_len))
    x = rng.normal(size=(7, 1))
    out = m.forward(ThetaBatch(Tensor(theta), m.layout), x).data
    for l in range(4):
        one = m.forward(ThetaBatch(Tensor(theta[l:l + 1]), m.layout), x).data
        np.testing.assert_array_equal(out[l], one[0])


def test_mlp_rejects_bad_arch():
    with pytest.raises(ContractError):
        MLP([3])
    with pytest.raises(ContractError):
        MLP([1, 4, 1], activation="gelu")


def test_mlp_input_width_checked():
    m = MLP([2, 3, 1])
    with pytest.raises(ContractError):
        m.forward(ThetaBatch(Tensor(np.zeros((1, m.layout.total_len))), m.layout), np.zeros((4, 3)))


def test_mlp_dropout_only_with_rng():
    rng = np.random.default_rng(4)
    m = MLP([1, 50, 1], dropout=0.5)
    theta = ThetaBatch(Tensor(rng.normal(size=(1, m.layout.total_len))), m.layout)
    x = rng.normal(size=(3, 1))
    a, b = m.forward(theta, x).data, m.forward(theta, x).data
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(m.forward(theta, x, rng=rng).data, a)


@pytest.mark.parametrize("conditional", [False, True])
def test_mlp_theta_gradients(conditional):
    rng = np.random.default_rng(5)
    m = MLP([2, 4, 1])
    shape = (2, 3, m.layout.total_len) if conditional else (2, m.layout.total_len)
    theta = Tensor(rng.normal(size=shape), requires_grad=True)
    x = rng.normal(size=(3, 2))
    w = rng.normal(size=(2, 3, 1))
    assert check_gradients(lambda: (m.forward(ThetaBatch(theta, m.layout), x) * w).sum(), [theta]) < 1e-5


# -- N-BEATS --------------------------------------------------------------
def test_nbeats_zero_theta_zero_forecast():
    cfg = NBeatsConfig(fc_width=8, fc_depth=2, theta_dim=4)
    m = NBeats(cfg)
    out = nbeats_forward(ThetaBatch(Tensor(np.zeros((2, m.layout.total_len))), m.layout),
                         np.random.default_rng(0).normal(size=(5, 6)), cfg)
    np.testing.assert_array_equal(out.data, np.zeros((2, 5, 3)))


def _identity_block_theta(m, cfg, forecast_w):
    parts = {}
    for j in range(cfg.fc_depth):
        parts[f"block.fc{j}.W"] = np.eye(cfg.fc_width)
    parts["block.theta.W"] = np.eye(cfg.theta_dim, cfg.fc_width)
    parts["block.forecast.W"] = forecast_w
    return parts


def test_nbeats_mean_projection_oracle():
    cfg = NBeatsConfig(input_len=6, horizon=3, blocks=1, fc_width=6, fc_depth=2, theta_dim=1)
    m = NBeats(cfg)
    parts = {f"block.fc{j}.W": np.eye(6) for j in range(2)}
    parts["block.theta.W"] = np.full((1, 6), 1 / 6)
    parts["block.forecast.W"] = np.ones((3, 1))
    theta = theta_from(m.layout, **{k.replace(".", "__"): v for k, v in parts.items()})
    x = np.random.default_rng(6).uniform(0.5, 3.0, size=(4, 6))  # positive: ReLU acts as identity
    out = m.forward(theta, x).data[0]
    np.testing.assert_allclose(out, np.repeat(x.mean(axis=1, keepdims=True), 3, axis=1), rtol=1e-14)


def test_nbeats_zero_residual_collapses_to_one_block():
    one = NBeats(NBeatsConfig(blocks=1, fc_width=6, fc_depth=3, theta_dim=6))
    three = NBeats(NBeatsConfig(blocks=3, fc_width=6, fc_depth=3, theta_dim=6))
    assert one.layout == three.layout  # shared weights: P counts one block
    rng = np.random.default_rng(7)
    parts = {f"block__fc{j}__W": np.eye(6) for j in range(3)}
    parts["block__theta__W"] = np.eye(6)
    parts["block__backcast__W"] = np.eye(6)  # backcast == input, so block 2 sees zeros
    parts["block__forecast__W"] = rng.normal(size=(3, 6))
    theta = theta_from(one.layout, **parts)
    x = rng.uniform(0.1, 2.0, size=(5, 6))
    np.testing.assert_array_equal(three.forward(theta, x).data, one.forward(theta, x).data)


def test_nbeats_residual_stack_against_loop():
    rng = np.random.default_rng(8)
    cfg = NBeatsConfig(blocks=3, fc_width=5, fc_depth=2, theta_dim=4, shared=False)
    m = NBeats(cfg)
    theta = rng.normal(size=m.layout.total_len) * 0.5
    x = rng.normal(size=(4, 6))
    p = m.layout.split_flat(theta)
    residual, total = x.copy(), np.zeros((4, 3))
    for i in range(3):
        a = residual
        for j in range(2):
            a = np.maximum(a @ p[f"block{i}.fc{j}.W"].T + p[f"block{i}.fc{j}.b"], 0)
        t = a @ p[f"block{i}.theta.W"].T
        residual = residual - (t @ p[f"block{i}.backcast.W"].T + p[f"block{i}.backcast.b"])
        total += t @ p[f"block{i}.forecast.W"].T + p[f"block{i}.forecast.b"]
    out = m.forward(ThetaBatch(Tensor(theta[None]), m.layout), x).data[0]
    np.testing.assert_allclose(out, total, atol=1e-12)


def test_nbeats_conditional_equals_loop():
    rng = np.random.default_rng(9)
    m = NBeats(NBeatsConfig(fc_width=4, fc_depth=2, theta_dim=3))
    theta = rng.normal(size=(2, 3, m.layout.total_len)) * 0.5
    x = rng.normal(size=(3, 6))
    out = m.forward(ThetaBatch(Tensor(theta), m.layout), x).data
    assert np.abs(out - _looped(m, theta, x)).max() <= 1e-12


def test_nbeats_nonpositive_horizon():
    with pytest.raises(ContractError):
        NBeatsConfig(horizon=0)


def test_nbeats_shared_vs_unshared_size():
    shared = NBeats(NBeatsConfig(fc_width=8, fc_depth=2, theta_dim=4))
    unshared = NBeats(NBeatsConfig(fc_width=8, fc_depth=2, theta_dim=4, shared=False))
    assert unshared.layout.total_len == 3 * shared.layout.total_len


def test_nbeats_theta_gradients():
    rng = np.random.default_rng(10)
    m = NBeats(NBeatsConfig(fc_width=4, fc_depth=2, theta_dim=3))
    theta = Tensor(rng.normal(size=(2, 2, m.layout.total_len)) * 0.5, requires_grad=True)
    x = rng.normal(size=(2, 6))
    w = rng.normal(size=(2, 2, 3))
    assert check_gradients(lambda: (m.forward(ThetaBatch(theta, m.layout), x) * w).sum(), [theta]) < 1e-5
