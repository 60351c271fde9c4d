import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtsdvgan.data import (DegenerateColumn, EmptyWindowSet, IngestError,
                           RawSeries, apply_normalizer, apply_pca,
                           fit_normalizer, fit_pca, jitter_scale, load_csv,
                           make_windows, pca_reconstruct, write_csv)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_csv_with_labels(tmp_path):
    p = _write(tmp_path, "a,b,label\n1,2,0\n3,4,1\n5,6,0\n")
    s = load_csv(p, has_labels=True)
    assert s.values.shape == (3, 2)
    assert s.labels.tolist() == [0, 1, 0]
    assert s.feature_names == ["a", "b"]


def test_load_csv_nan_cell_rejected(tmp_path):
    p = _write(tmp_path, "a,b\n1,2\nNaN,4\n")
    with pytest.raises(IngestError, match="non-finite"):
        load_csv(p)


def test_load_csv_bad_label_names_row(tmp_path):
    p = _write(tmp_path, "a,label\n1,0\n2,1\n3,2\n")
    with pytest.raises(IngestError, match=":4"):
        load_csv(p, has_labels=True)


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "nope.csv")


def test_load_csv_empty_body(tmp_path):
    p = _write(tmp_path, "a,b\n")
    with pytest.raises(IngestError, match="no data rows"):
        load_csv(p)


def test_load_csv_missing_label_column(tmp_path):
    p = _write(tmp_path, "a,b\n1,2\n")
    with pytest.raises(IngestError, match="label"):
        load_csv(p, has_labels=True)


def test_load_csv_non_numeric_cell(tmp_path):
    p = _write(tmp_path, "a,b\n1,x\n")
    with pytest.raises(IngestError, match="non-numeric"):
        load_csv(p)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    s = RawSeries(values=rng.normal(size=(17, 3)),
                  labels=rng.integers(0, 2, 17).astype(np.uint8),
                  feature_names=["x", "y", "z"])
    p = tmp_path / "rt.csv"
    write_csv(p, s)
    back = load_csv(p, has_labels=True)
    np.testing.assert_array_equal(back.values, s.values)
    np.testing.assert_array_equal(back.labels, s.labels)
    assert back.feature_names == s.feature_names


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def test_normalizer_formula_values():
    s = RawSeries(values=np.array([[0.0], [4.0], [8.0]]))
    state = fit_normalizer(s)
    out = apply_normalizer(state, s)
    np.testing.assert_allclose(out.values[:, 0], [-1.0, 0.0, 1.0])


def test_normalizer_constant_column_maps_to_one():
    s = RawSeries(values=np.full((5, 1), 3.5))
    out = apply_normalizer(fit_normalizer(s), s)
    np.testing.assert_array_equal(out.values, np.ones((5, 1)))


def test_normalizer_zero_column_rejected():
    s = RawSeries(values=np.zeros((4, 2)))
    with pytest.raises(DegenerateColumn):
        fit_normalizer(s)


def test_normalizer_training_maxima_exactly_one():
    rng = np.random.default_rng(3)
    vals = rng.uniform(0.1, 9.0, size=(200, 6))
    s = RawSeries(values=vals)
    out = apply_normalizer(fit_normalizer(s), s)
    np.testing.assert_array_equal(out.values.max(axis=0), np.ones(6))


def test_normalizer_test_data_can_exceed_one():
    train = RawSeries(values=np.array([[1.0], [2.0]]))
    state = fit_normalizer(train)
    test = RawSeries(values=np.array([[4.0]]))
    assert apply_normalizer(state, test).values[0, 0] == pytest.approx(3.0)


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

def test_pca_line_through_origin_captures_all_variance():
    t = np.linspace(-1, 1, 50)
    direction = np.array([1.0, 2.0, -1.0])
    s = RawSeries(values=np.outer(t, direction))
    state = fit_pca(s, d=1)
    total_var = s.values.var(axis=0, ddof=1).sum()
    assert state.explained_variance[0] == pytest.approx(total_var, rel=1e-10)


def _data_with_exact_covariance(cov, n=400, seed=0):
    """Whiten a sample empirically, then color it: the sample covariance
    equals cov exactly (the independent eigendecomposition oracle)."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, cov.shape[0]))
    x -= x.mean(axis=0)
    sample_cov = x.T @ x / (n - 1)
    whiten = np.linalg.inv(np.linalg.cholesky(sample_cov))
    color = np.linalg.cholesky(cov)
    return x @ whiten.T @ color.T


def test_pca_known_covariance_eigenvalues():
    cov = np.array([[2.0, 0.0], [0.0, 1.0]])
    s = RawSeries(values=_data_with_exact_covariance(cov))
    state = fit_pca(s, d=2)
    np.testing.assert_allclose(state.explained_variance, [2.0, 1.0], atol=1e-9)
    # first component aligned with axis 0 up to sign
    assert abs(state.components[0, 0]) == pytest.approx(1.0, abs=1e-9)
    assert abs(state.components[0, 1]) == pytest.approx(0.0, abs=1e-9)


def test_pca_d_out_of_range():
    s = RawSeries(values=np.random.default_rng(0).normal(size=(10, 3)))
    with pytest.raises(ValueError):
        fit_pca(s, d=4)
    with pytest.raises(ValueError):
        fit_pca(s, d=0)


def test_pca_orthonormal_and_sorted_on_random_matrices():
    rng = np.random.default_rng(5)
    for _ in range(25):
        T = int(rng.integers(10, 60))
        N = int(rng.integers(2, 9))
        d = int(rng.integers(1, N + 1))
        s = RawSeries(values=rng.normal(scale=rng.uniform(0.5, 4.0), size=(T, N)))
        state = fit_pca(s, d)
        gram = state.components @ state.components.T
        np.testing.assert_allclose(gram, np.eye(d), atol=1e-8)
        assert (np.diff(state.explained_variance) <= 1e-12).all()


def test_pca_rank_deficient_pads_with_zero_variance():
    t = np.linspace(-1, 1, 30)
    s = RawSeries(values=np.outer(t, [1.0, 1.0, 0.0]))
    state = fit_pca(s, d=3)
    assert state.explained_variance[0] > 0
    np.testing.assert_allclose(state.explained_variance[1:], 0.0, atol=1e-12)
    np.testing.assert_allclose(state.components @ state.components.T,
                               np.eye(3), atol=1e-8)


def test_pca_round_trip_idempotent():
    rng = np.random.default_rng(9)
    s = RawSeries(values=rng.normal(size=(80, 6)))
    state = fit_pca(s, d=3)
    reduced = apply_pca(state, s)
    recon = pca_reconstruct(state, reduced)
    again = apply_pca(state, RawSeries(values=recon))
    np.testing.assert_allclose(again, reduced, atol=1e-8)


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------

def test_window_count_examples():
    series = np.zeros((100, 2))
    assert len(make_windows(series, None, 30, 10)) == 8
    assert len(make_windows(np.zeros((30, 2)), None, 30, 10)) == 1
    with pytest.raises(EmptyWindowSet):
        make_windows(np.zeros((29, 2)), None, 30, 10)


@settings(max_examples=60, deadline=None)
@given(T=st.integers(1, 400), k=st.integers(1, 50), shift=st.integers(1, 25))
def test_window_count_formula(T, k, shift):
    series = np.zeros((T, 1))
    if T < k:
        with pytest.raises(EmptyWindowSet):
            make_windows(series, None, k, shift)
        return
    ws = make_windows(series, None, k, shift)
    assert len(ws) == (T - k) // shift + 1
    assert (np.diff(ws.start_indices) == shift).all() or len(ws) <= 1


def test_window_reconstruction_when_shift_equals_k():
    rng = np.random.default_rng(1)
    series = rng.normal(size=(60, 3))
    ws = make_windows(series, None, 12, 12)
    np.testing.assert_array_equal(ws.windows.reshape(-1, 3), series)


def test_window_label_any_overlap_rule():
    labels = np.zeros(50, dtype=np.uint8)
    labels[24] = 1
    ws = make_windows(np.zeros((50, 1)), labels, 10, 5)
    expected = [1 if s <= 24 < s + 10 else 0 for s in ws.start_indices]
    assert ws.window_labels.tolist() == expected


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------

def test_jitter_zero_sigmas_is_identity():
    rng = np.random.default_rng(0)
    batch = rng.normal(size=(4, 6, 3)).astype(np.float32)
    out = jitter_scale(batch, 0.0, 0.0, np.random.default_rng(1))
    np.testing.assert_array_equal(out, batch)


def test_jitter_deterministic_per_seed():
    batch = np.random.default_rng(0).normal(size=(4, 6, 3))
    a = jitter_scale(batch, 0.1, 0.05, np.random.default_rng(42))
    b = jitter_scale(batch, 0.1, 0.05, np.random.default_rng(42))
    np.testing.assert_array_equal(a, b)


def test_jitter_negative_sigma_rejected():
    with pytest.raises(ValueError):
        jitter_scale(np.zeros((1, 2, 2)), -0.1, 0.0, np.random.default_rng(0))


def test_jitter_noise_is_centered():
    # 10^5 draws of pure jitter: elementwise mean within +-0.005 of zero
    batch = np.zeros((100, 100, 10))
    out = jitter_scale(batch, 0.1, 0.0, np.random.default_rng(7))
    assert abs(out.mean()) < 0.005
    assert np.abs(out.mean(axis=(0, 1))).max() < 0.005
