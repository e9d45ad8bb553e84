import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pgnnff.data import (
    DataSet,
    DiffOperators,
    NormalizationRecord,
    RegressorSpec,
    apply_avg,
    apply_delta,
    build_regressors,
    normalize_inputs,
    read_log_csv,
    split_train_val,
    write_log_csv,
)


# ---------------------------------------------------------------------------
# RegressorSpec


def test_spec_lengths():
    spec = RegressorSpec(n_a=5, n_b=1, n_k=2)
    assert spec.n_y == 6
    assert spec.n_u == 0
    assert spec.length == 6
    np.testing.assert_array_equal(spec.y_shifts(), [3, 2, 1, 0, -1, -2])
    assert spec.u_shifts().size == 0


def test_spec_shifts_with_inputs():
    spec = RegressorSpec(1, 2, 0)
    np.testing.assert_array_equal(spec.y_shifts(), [1, 0])
    np.testing.assert_array_equal(spec.u_shifts(), [-1])
    assert spec.length == 3


def test_spec_validation():
    with pytest.raises(ValueError):
        RegressorSpec(-1, 1, 0)
    with pytest.raises(ValueError):
        RegressorSpec(2, 0, 0)
    with pytest.raises(ValueError):
        RegressorSpec(2, 1, -1)


# ---------------------------------------------------------------------------
# build_regressors


def test_build_regressors_zero_log():
    spec = RegressorSpec(2, 2, 0)
    t = np.arange(30) * 1e-3
    ds = build_regressors(t, np.zeros(30), np.zeros(30), spec)
    assert ds.N > 0
    assert np.all(ds.phi == 0.0)
    assert np.all(ds.u == 0.0)


def test_build_regressors_output_only_window():
    # output-only regressor of length 6 spanning y(k+3)..y(k-2)
    spec = RegressorSpec(5, 1, 2)
    n = 20
    t = np.arange(n) * 1e-3
    y = np.arange(n, dtype=float)
    ds = build_regressors(t, np.zeros(n), y, spec)
    assert ds.phi.shape[1] == 6
    # first valid k is 2 (needs y(k-2)); check its window indices
    np.testing.assert_array_equal(ds.phi[0], [5, 4, 3, 2, 1, 0])


def test_build_regressors_hand_unrolled():
    T_s = 0.1
    spec = RegressorSpec(1, 2, 0)
    n = 12
    t = np.arange(n) * T_s
    y = np.arange(n) * T_s
    u = np.ones(n)
    ds = build_regressors(t, u, y, spec)
    for i in range(ds.N):
        k = i + 1  # first valid k needs u(k-1)
        np.testing.assert_allclose(ds.phi[i], [y[k + 1], y[k], u[k - 1]])
        assert ds.u[i] == u[k]


def test_build_regressors_too_short():
    spec = RegressorSpec(5, 1, 2)
    with pytest.raises(ValueError, match="too short"):
        build_regressors([0, 1e-3], [0, 0], [0, 0], spec)


def test_build_regressors_difference_equation_consistency():
    # samples from u(k) = a0 y(k+1) + a1 y(k) + b1 u(k-1) satisfy the
    # equation exactly once stacked into regressors
    rng = np.random.default_rng(0)
    theta = np.array([2.0, -1.3, 0.4])
    n = 200
    y = rng.normal(size=n)
    u = np.zeros(n)
    for k in range(1, n - 1):
        u[k] = theta @ [y[k + 1], y[k], u[k - 1]]
    ds = build_regressors(np.arange(n) * 1e-3, u, y, RegressorSpec(1, 2, 0))
    resid = ds.u - ds.phi @ theta
    assert np.max(np.abs(resid)) < 1e-10


# ---------------------------------------------------------------------------
# difference operators


def test_delta_constant_is_zero():
    ops = DiffOperators(1e-3)
    out = apply_delta(np.full(10, 3.7), ops)
    assert out.size == 8
    np.testing.assert_allclose(out, 0.0)


def test_delta_ramp_is_one():
    T_s = 1e-3
    ops = DiffOperators(T_s)
    out = apply_delta(np.arange(10) * T_s, ops)
    np.testing.assert_allclose(out, 1.0)


def test_delta_matches_bruteforce_on_sine():
    T_s = 0.001
    w = 10.0
    k = np.arange(200)
    y = np.sin(w * k * T_s)
    out = apply_delta(y, DiffOperators(T_s))
    ref = np.array([(y[i + 1] - y[i - 1]) / (2 * T_s) for i in range(1, 199)])
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-12)


def test_delta_second_order_equals_twice_applied():
    ops = DiffOperators(0.01)
    y = np.random.default_rng(1).normal(size=50)
    np.testing.assert_allclose(
        apply_delta(y, ops, order=2), apply_delta(apply_delta(y, ops), ops)
    )


def test_delta_too_short():
    with pytest.raises(ValueError):
        apply_delta([1.0, 2.0], DiffOperators(1e-3))


def test_avg_constant():
    np.testing.assert_allclose(apply_avg(np.full(5, 2.5)), 2.5)


# ---------------------------------------------------------------------------
# split


def _toy_dataset(n, seed=0):
    rng = np.random.default_rng(seed)
    spec = RegressorSpec(1, 2, 0)
    return DataSet(rng.normal(size=(n, 3)), rng.normal(size=n), spec, 1e-3)


def test_split_sizes_small():
    tr, va = split_train_val(_toy_dataset(10), 0.7, seed=0)
    assert (tr.N, va.N) == (7, 3)


def test_split_sizes_large():
    # 70/30 of 146000 samples
    tr, va = split_train_val(_toy_dataset(146000), 0.7, seed=0)
    assert (tr.N, va.N) == (102200, 43800)


def test_split_deterministic_and_disjoint():
    ds = _toy_dataset(50)
    tr1, va1 = split_train_val(ds, 0.7, seed=42)
    tr2, va2 = split_train_val(ds, 0.7, seed=42)
    np.testing.assert_array_equal(tr1.phi, tr2.phi)
    np.testing.assert_array_equal(va1.u, va2.u)
    # union of targets recovers the multiset of all targets
    merged = np.sort(np.concatenate([tr1.u, va1.u]))
    np.testing.assert_array_equal(merged, np.sort(ds.u))


def test_split_rejects_empty_partition():
    with pytest.raises(ValueError):
        split_train_val(_toy_dataset(3), 0.01, seed=0)


# ---------------------------------------------------------------------------
# normalization


def test_normalize_two_point_coordinate():
    spec = RegressorSpec(0, 2, 0)
    ds = DataSet(np.array([[0.0, 5.0], [2.0, 5.0]]), np.zeros(2), spec, 1e-3)
    _, rec = normalize_inputs(ds)
    # population convention: values {0, 2} have mean 1 and std 1
    assert rec.shift[0] == 1.0
    assert rec.scale[0] == 1.0
    # constant coordinate keeps scale 1, shift = mean
    assert rec.shift[1] == 5.0
    assert rec.scale[1] == 1.0


def test_normalize_identity_on_standardized_data():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(500, 3))
    x = (x - x.mean(axis=0)) / x.std(axis=0)
    ds = DataSet(x, np.zeros(500), RegressorSpec(1, 2, 0), 1e-3)
    _, rec = normalize_inputs(ds)
    np.testing.assert_allclose(rec.shift, 0.0, atol=1e-12)
    np.testing.assert_allclose(rec.scale, 1.0, atol=1e-12)


def test_normalize_round_trip():
    ds = _toy_dataset(100, seed=3)
    dsn, rec = normalize_inputs(ds)
    np.testing.assert_allclose(rec.invert(dsn.phi), ds.phi, rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.integers(0, 1000))
def test_normalize_round_trip_property(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=rng.uniform(1e-3, 1e3), size=(n, 2))
    rec = NormalizationRecord.fit(x)
    np.testing.assert_allclose(rec.invert(rec.apply(x)), x, rtol=1e-12, atol=1e-12)


def test_normalization_record_serialization():
    rec = NormalizationRecord(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
    rec2 = NormalizationRecord.from_dict(rec.to_dict())
    np.testing.assert_array_equal(rec2.shift, rec.shift)
    np.testing.assert_array_equal(rec2.scale, rec.scale)


# ---------------------------------------------------------------------------
# CSV log round trip


def test_log_csv_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    t = np.arange(20) * 1e-3
    u = rng.normal(size=20)
    y = rng.normal(size=20)
    path = tmp_path / "log.csv"
    write_log_csv(path, t, u, y)
    t2, u2, y2 = read_log_csv(path)
    np.testing.assert_array_equal(t2, t)
    np.testing.assert_array_equal(u2, u)
    np.testing.assert_array_equal(y2, y)


def test_log_csv_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,u\n0.0,1.0\n")
    with pytest.raises(ValueError, match="missing column"):
        read_log_csv(path)


def test_dataset_immutable():
    ds = _toy_dataset(5)
    with pytest.raises(ValueError):
        ds.phi[0, 0] = 99.0
