import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperbayes.datasets import (
    DEFAULT_TRAIN_FRACTION,
    XSINX_EXTRA_POINTS,
    RegressionDataset,
    Standardizer,
    gen_multimodal,
    gen_xsinx,
    load_csv_series,
    multimodal_curves,
    split,
    standardize,
    standardize_windows,
    synthetic_seasonal_series,
    window_series,
)
from hyperbayes.errors import ContractError, IngestionError


# -- x sin x --------------------------------------------------------------
def test_xsinx_extra_points_verbatim():
    d = gen_xsinx(rng=0)
    assert len(d) == 36
    np.testing.assert_array_equal(np.column_stack([d.x[32:, 0], d.y[32:, 0]]), XSINX_EXTRA_POINTS)
    assert XSINX_EXTRA_POINTS == ((7.0, -7.0), (8.5, 7.0), (10.0, -7.0), (11.5, 7.0))


def test_xsinx_base_curve():
    d = gen_xsinx(rng=1, grid=True)
    assert d.x[0, 0] == 0.0 and d.y[0, 0] == 0.0
    np.testing.assert_array_equal(d.y[:32], d.x[:32] * np.sin(d.x[:32]))


def test_xsinx_test_grid_is_wider():
    d = gen_xsinx(rng=2)
    assert d.x_test.shape == (1024, 1)
    assert d.x_test.min() < d.x.min() and d.x_test.max() > d.x.max()


def test_xsinx_seeded():
    assert np.array_equal(gen_xsinx(rng=3).x, gen_xsinx(rng=3).x)
    assert not np.array_equal(gen_xsinx(rng=3).x, gen_xsinx(rng=4).x)


# -- multimodal -----------------------------------------------------------
def test_multimodal_branches_at_midpoint():
    lo, hi = multimodal_curves(np.array([0.5]))
    assert lo[0] == 0.0 and hi[0] == 1.0


def test_multimodal_counts_and_domains():
    d = gen_multimodal(rng=5)
    assert len(d) == 128
    lower, upper = d.x[0::2, 0], d.x[1::2, 0]
    assert len(lower) == len(upper) == 64
    assert lower.min() > 0 and lower.max() < 0.6
    assert upper.min() > 0.3 and upper.max() < 1.0


def test_multimodal_gap_is_one_on_overlap():
    x = np.linspace(0.31, 0.59, 50)
    lo, hi = multimodal_curves(x)
    np.testing.assert_allclose(hi - lo, 1.0, atol=1e-15)


def test_multimodal_noise_variance():
    d = gen_multimodal(n=20_000, noise_var=0.01, rng=6)
    lo, hi = multimodal_curves(d.x[:, 0])
    resid = d.y[:, 0] - np.where(np.arange(20_000) % 2, hi, lo)
    assert resid.std() == pytest.approx(0.1, rel=0.03)


def test_multimodal_labels():
    d = gen_multimodal(rng=7)
    x, lab = d.x[:, 0], d.labels[:, 0]
    inside = (x > 0.3) & (x < 0.6)
    np.testing.assert_array_equal(lab[inside], np.arange(128)[inside] % 2)
    assert set(np.unique(d.labels_test)) <= {0.0, 1.0}
    assert 0.3 < d.labels_test.mean() < 0.7
    with pytest.raises(ContractError):
        gen_multimodal(n=7)


# -- standardisation ------------------------------------------------------
def test_standardized_training_columns():
    d = standardize(gen_xsinx(rng=8))
    for col in (d.x, d.y):
        assert abs(col.mean()) < 1e-9 and abs(col.std() - 1) < 1e-9
    np.testing.assert_allclose(d.x_scaler.inverse(d.x), gen_xsinx(rng=8).x, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(-1e3, 1e3), st.floats(1e-3, 1e3))
def test_standardize_round_trip(seed, loc, scale):
    v = np.random.default_rng(seed).normal(loc, scale, size=(20, 2))
    s = Standardizer.fit(v)
    assert np.abs(s.inverse(s.transform(v)) - v).max() <= 1e-12 * max(1.0, np.abs(v).max())


def test_constant_column_does_not_divide_by_zero():
    s = Standardizer.fit(np.full((5, 1), 3.0))
    np.testing.assert_array_equal(s.transform([[3.0]]), [[0.0]])


def test_dataset_row_contract():
    with pytest.raises(ContractError):
        RegressionDataset(np.zeros(3), np.zeros(4))


# -- windowing ------------------------------------------------------------
def test_window_example():
    w = window_series(np.arange(1.0, 11.0), 6, 3)
    assert len(w) == 2
    np.testing.assert_array_equal(w.inputs, [[1, 2, 3, 4, 5, 6], [2, 3, 4, 5, 6, 7]])
    np.testing.assert_array_equal(w.targets, [[7, 8, 9], [8, 9, 10]])


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 60), st.integers(1, 8), st.integers(1, 5))
def test_window_index_audit(T, h_in, h_out):
    if T < h_in + h_out:
        with pytest.raises(ContractError):
            window_series(np.arange(T), h_in, h_out)
        return
    w = window_series(np.arange(float(T)), h_in, h_out)
    assert len(w) == T - h_in - h_out + 1
    # targets start right after the inputs and never overlap them
    np.testing.assert_array_equal(w.targets[:, 0], w.inputs[:, -1] + 1)
    assert np.all(w.targets.min(axis=1) > w.inputs.max(axis=1))


def test_split_fraction_and_chronology():
    w = split(window_series(np.arange(2968.0), 6, 3))
    assert len(w) == 2960 and w.split == 2075
    assert DEFAULT_TRAIN_FRACTION == pytest.approx(0.701, abs=1e-3)
    assert w.train.targets.max() < w.test.targets.max()
    assert w.train.inputs[-1, 0] + 1 == w.test.inputs[0, 0]
    with pytest.raises(ContractError):
        split(w, 1.0)


def test_window_standardisation_fits_training_only():
    series = np.concatenate([np.zeros(50), np.full(50, 100.0)])
    w, scaler = standardize_windows(split(window_series(series + np.arange(100) * 0.01, 4, 2), 0.3))
    train_vals = np.concatenate([w.train.inputs.ravel(), w.train.targets.ravel()])
    assert abs(train_vals.mean()) < 1e-9 and abs(train_vals.std() - 1) < 1e-9
    assert w.test.inputs.mean() > 10  # test statistics did not leak into the fit
    with pytest.raises(ContractError):
        standardize_windows(window_series(series, 4, 2))


# -- CSV ------------------------------------------------------------------
def test_load_csv_with_header(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("temperature\n1.5\n\n2.0\n-3\n")
    np.testing.assert_array_equal(load_csv_series(p), [1.5, 2.0, -3.0])


def test_load_csv_bad_row_names_line(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("1.0\n2.0\nabc\n")
    with pytest.raises(IngestionError, match=":3:"):
        load_csv_series(p)
    p.write_text("1.0,2.0\n")
    with pytest.raises(IngestionError, match=":1:"):
        load_csv_series(p)
    p.write_text("header\n")
    with pytest.raises(IngestionError):
        load_csv_series(p)


def test_dataset_csv_dump(tmp_path):
    p = tmp_path / "d.csv"
    gen_multimodal(n=4, rng=9).to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "x0,y0,label" and len(lines) == 5


def test_synthetic_series_seeded():
    a = synthetic_seasonal_series(length=100, rng=10)
    assert a.shape == (100,) and np.array_equal(a, synthetic_seasonal_series(length=100, rng=10))
    clean = synthetic_seasonal_series(length=24, noise=0.0, trend=0.0, level=0.0, rng=0)
    np.testing.assert_allclose(clean[:12], clean[12:], atol=1e-12)
