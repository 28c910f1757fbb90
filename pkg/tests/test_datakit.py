import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmlearn.calibration import GAS_TABLE, PV_TABLE, TABLES, WELLLOG_TABLE, lookup
from swarmlearn.datakit import (
    ConstantColumn,
    DegenerateGroup,
    NormStats,
    SeriesDataset,
    WindowSpec,
    add_gas_features,
    destandardize,
    first_difference,
    gas_capacity,
    gen_series,
    make_windows,
    minmax_denormalize,
    minmax_normalize,
    n_windows,
    pooled_stats,
    split_by_months,
    split_dataset,
    standardize,
)


def _stats(lo, hi):
    return NormStats(np.array(lo, float), np.array(hi, float), np.zeros(1), np.zeros(1))


def test_minmax():
    s = _stats([0.0], [3817.0])
    assert minmax_normalize([0.0, 3817.0], s).tolist() == [0.0, 1.0]
    assert minmax_normalize(1065.97, s) == pytest.approx(0.27926905947078856, abs=1e-15)
    x = np.array([12.5, 900.0, 3000.1])
    np.testing.assert_allclose(minmax_denormalize(minmax_normalize(x, s), s), x, atol=1e-12)
    with pytest.raises(ConstantColumn):
        minmax_normalize([1.0], _stats([2.0], [2.0]))


def test_gas_capacity_cases():
    assert gas_capacity(12.0, 3.0) == 4.0
    assert gas_capacity(0.0, 5.0) == 0.0
    assert gas_capacity(5.0, 0.0) == 0.0
    dhg = np.array([10.0, 0.0, 6.0])
    pt = np.array([2.0, 0.0, 4.0])
    e = gas_capacity(dhg, pt)
    producing = pt > 0
    np.testing.assert_allclose(e[producing] * pt[producing], dhg[producing])


def test_first_difference():
    assert first_difference([5, 7, 4]).tolist() == [2, -3]
    assert first_difference([3, 3, 3, 3]).tolist() == [0, 0, 0]
    e = np.array([1.5, 2.0, -0.5, 4.0])
    assert np.array_equal(np.concatenate([[e[0]], e[0] + np.cumsum(first_difference(e))]), e)


def pooled_oracle(groups):
    """Each group's formula terms accumulated one by one in plain floats."""
    num_mean = num_var = total = 0.0
    for n, mu, sd in groups:
        num_mean += n * mu
        num_var += (n - 1) * sd * sd
        total += n
    return num_mean / total, math.sqrt(num_var / (total - len(groups)))


def test_pooled_stats_examples():
    assert pooled_stats([(3, 2.0, 1.0), (3, 2.0, 1.0)]) == pytest.approx((2.0, 1.0))
    assert pooled_stats([(10, -1.5, 0.25)]) == pytest.approx((-1.5, 0.25))
    rng = np.random.default_rng(0)
    raw = [rng.normal(m, s, n) for m, s, n in [(0.0, 1.0, 7), (5.0, 2.0, 12), (-3.0, 0.5, 4)]]
    groups = [(len(r), r.mean(), r.std(ddof=1)) for r in raw]
    mu, sd = pooled_stats(groups)
    o_mu, o_sd = pooled_oracle(groups)
    assert abs(mu - o_mu) <= 1e-12 and abs(sd - o_sd) <= 1e-12
    concat = np.concatenate(raw)
    assert mu == pytest.approx(concat.mean(), abs=1e-12)
    # pooling removes the spread between group means, so it is strictly narrower here
    assert sd < concat.std(ddof=1)
    with pytest.raises(DegenerateGroup):
        pooled_stats([(1, 0.0, 0.0), (3, 1.0, 1.0)])
    with pytest.raises(DegenerateGroup):
        pooled_stats([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(2, 50), st.floats(-10, 10), st.floats(0.01, 5)), min_size=1, max_size=6), st.randoms())
def test_pooled_stats_order_invariant(groups, rnd):
    shuffled = list(groups)
    rnd.shuffle(shuffled)
    a, b = pooled_stats(groups), pooled_stats(shuffled)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)
    assert a == pytest.approx(pooled_oracle(groups), rel=1e-12, abs=1e-12)


def test_pooled_stats_per_column():
    groups = [(4, np.array([0.0, 1.0]), np.array([1.0, 2.0])), (6, np.array([2.0, 1.0]), np.array([1.0, 2.0]))]
    mu, sd = pooled_stats(groups)
    np.testing.assert_allclose(mu, [1.2, 1.0])
    np.testing.assert_allclose(sd, [1.0, 2.0])


def test_standardize():
    x = np.array([1.0, 2.0, 4.0])
    z = standardize(x, 2.0, 0.5)
    np.testing.assert_allclose(z, [-2.0, 0.0, 4.0])
    np.testing.assert_allclose(destandardize(z, 2.0, 0.5), x, atol=1e-12)
    with pytest.raises(ConstantColumn):
        standardize(x, 0.0, 0.0)


def test_window_counts():
    x = np.arange(10.0)
    b = make_windows(x, x, WindowSpec(7, 1, 1))
    assert len(b) == 3
    assert b.targets[:, 0].tolist() == [7.0, 8.0, 9.0]
    # stride equal to the length: one window if it fits, none otherwise
    assert n_windows(10, WindowSpec(7, 1, 10)) == 1
    assert n_windows(7, WindowSpec(7, 1, 7)) == 0
    assert n_windows(10, WindowSpec(4, aligned=True, stride=3)) == 3


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60), st.integers(1, 8), st.integers(1, 5), st.integers(1, 4))
def test_windows_never_leak(length, T, horizon, stride):
    idx = np.arange(float(length))
    spec = WindowSpec(T, horizon, stride)
    b = make_windows(idx, idx, spec)
    assert len(b) == n_windows(length, spec)
    for xs, ys in zip(b.inputs[:, :, 0], b.targets):
        assert xs.max() < ys.min()
        assert np.all(np.diff(xs) == 1) and np.all(np.diff(ys) == 1)


def test_pv_window_shapes():
    x = np.zeros((200, 4))
    b = make_windows(x, x[:, 0], WindowSpec(48, 12, 12))
    assert b.inputs.shape[1:] == (48, 4) and b.targets.shape[1] == 12


def test_aligned_windows_pair_positions():
    x = np.arange(12.0)
    b = make_windows(x, 10 * x, WindowSpec(4, stride=4, aligned=True))
    np.testing.assert_array_equal(b.targets, 10 * b.inputs[:, :, 0])


def test_split_rules():
    assert split_dataset(100) == (slice(0, 70), slice(70, 90), slice(90, 100))
    assert split_dataset(101) == (slice(0, 70), slice(70, 90), slice(90, 101))
    with pytest.raises(ValueError):
        split_dataset(10, (0.8, 0.5, 0.0))
    ts = np.arange("2022-01", "2023-07", dtype="datetime64[M]").astype("datetime64[h]")
    tr, va, te = split_by_months(ts, 2, 2)
    assert (te.stop - te.start, va.stop - va.start, tr.stop) == (2, 2, 14)


def test_calibration_tables():
    assert len(PV_TABLE) == 18 and len(GAS_TABLE) == 24 and len(WELLLOG_TABLE) == 36
    assert set(TABLES) == {"PV", "Gas", "WellLog"}
    p1 = lookup("PV", "P1")
    assert p1.mean == 1065.97 and p1.max == 3817.0
    assert lookup("Gas", "W16").count == 440


def test_pv_generator_matches_calibration():
    ds = gen_series("PV", "P1", seed=0)
    load = ds.column("load")
    assert abs(load.mean() - 1065.97) <= 0.15 * 1065.97
    assert load.max() <= 1.2 * 3817.0
    assert load.min() >= 0.0
    hours = ds.index.astype("datetime64[h]").astype(int) % 24
    assert set(np.unique(hours)) <= set(range(6, 18))
    tr, va, te = split_by_months(ds.index)
    assert len(np.unique(ds.index[te].astype("datetime64[M]"))) == 2


@pytest.mark.parametrize("kind,label", [("Gas", "W3"), ("Gas", "W16"), ("WellLog", "A7"), ("PV", "P4")])
def test_generators_are_calibrated_and_deterministic(kind, label):
    ds = gen_series(kind, label, seed=0)
    ref = lookup(kind, label)
    y = ds.column(ds.target)
    assert len(ds) == ref.count
    assert abs(y.mean() - ref.mean) <= 0.15 * abs(ref.mean)
    assert abs(y.std(ddof=1) - ref.std) <= 0.15 * ref.std
    assert np.array_equal(gen_series(kind, label, seed=0).values, ds.values)
    assert not np.array_equal(gen_series(kind, label, seed=1).values, ds.values)


def test_gas_features_and_shut_in_days():
    ds = add_gas_features(gen_series("Gas", "W5", seed=0, length=200))
    e, pt, dhg = ds.column("E_gas"), ds.column("PT"), ds.column("DHG")
    assert np.all(e[pt == 0] == 0) and np.any(pt == 0)
    np.testing.assert_allclose(e[pt > 0] * pt[pt > 0], dhg[pt > 0])
    de = ds.column("dE_gas")
    assert de[0] == 0.0 and np.allclose(de[1:], np.diff(e))


def test_csv_roundtrip(tmp_path):
    for kind, label in [("Gas", "W1"), ("PV", "P2")]:
        ds = gen_series(kind, label, seed=0, length=50)
        path = tmp_path / f"{label}.csv"
        ds.to_csv(path)
        back = SeriesDataset.from_csv(path, label, kind, ds.target)
        assert back.columns == ds.columns
        assert np.array_equal(back.values, ds.values)
        assert np.array_equal(back.index, ds.index)
