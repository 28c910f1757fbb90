"""Synthetic energy series, preprocessing formulas, windowing and splits.

Three kinds of series are generated, each calibrated so that its target
column matches the published mean and standard deviation of the dataset
label it imitates:

* ``PV``: hourly plant load sampled 6:00-17:00 (12 samples a day) plus
  weather-proxy channels.
* ``Gas``: daily gas volume (``DHG``), production hours (``PT``) and
  wellhead casing/tubing pressures, with shut-in days.
* ``WellLog``: depth-indexed GR / AT30 / RHOZ proxies and a DTSM proxy.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .calibration import TABLES, SeriesStats
from .trainer import TrainBatch

KINDS = ("PV", "Gas", "WellLog")
PV_WEATHER = ("elec_num", "rh", "u10", "v10", "t2m", "ssrd", "strd", "tsr", "tcc")
PV_HOURS = tuple(range(6, 18))
GAS_RAW = ("DHG", "PT", "casing_pressure", "tubing_pressure")
WELL_CURVES = ("GR", "AT30", "RHOZ")


class ConstantColumn(ValueError):
    pass


class DegenerateGroup(ValueError):
    pass


@dataclass
class SeriesDataset:
    label: str
    kind: str
    columns: list[str]
    values: np.ndarray  # [N, len(columns)]
    target: str
    index: np.ndarray  # timestamps (PV), day numbers (Gas) or depths (WellLog)
    index_name: str = "index"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise ValueError(f"values shape {self.values.shape} does not match {len(self.columns)} columns")
        if len(self.values) == 0:
            raise ValueError("dataset is empty")

    def __len__(self) -> int:
        return len(self.values)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def select(self, names: Sequence[str]) -> np.ndarray:
        return np.column_stack([self.column(n) for n in names])

    def with_columns(self, names: Sequence[str], arrays: Sequence[np.ndarray]) -> "SeriesDataset":
        cols = list(self.columns) + list(names)
        vals = np.column_stack([self.values] + [np.asarray(a, dtype=np.float64) for a in arrays])
        return SeriesDataset(self.label, self.kind, cols, vals, self.target, self.index, self.index_name)

    def rows(self, sl: slice) -> "SeriesDataset":
        return SeriesDataset(
            self.label, self.kind, list(self.columns), self.values[sl], self.target, self.index[sl], self.index_name
        )

    # CSV ------------------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([self.index_name] + self.columns)
            for idx, row in zip(self.index, self.values):
                w.writerow([str(idx)] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, label: str, kind: str, target: str) -> "SeriesDataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        index_name = header[0]
        raw_index = [r[0] for r in body]
        if kind == "PV":
            index = np.array(raw_index, dtype="datetime64[h]")
        else:
            index = np.array(raw_index, dtype=np.float64)
        values = np.array([[float(v) for v in r[1:]] for r in body])
        return cls(label, kind, header[1:], values, target, index, index_name)


@dataclass(frozen=True)
class NormStats:
    min: np.ndarray
    max: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    pooled_mean: Optional[np.ndarray] = None
    pooled_std: Optional[np.ndarray] = None

    @classmethod
    def of(cls, x) -> "NormStats":
        x = np.asarray(x, dtype=np.float64)
        return cls(x.min(axis=0), x.max(axis=0), x.mean(axis=0), x.std(axis=0, ddof=1) if len(x) > 1 else np.zeros(x.shape[1:]))


@dataclass(frozen=True)
class WindowSpec:
    history: int
    horizon: int = 1
    stride: int = 1
    aligned: bool = False  # targets at the same positions as the inputs

    def __post_init__(self):
        if min(self.history, self.horizon, self.stride) < 1:
            raise ValueError("history, horizon and stride must be >= 1")


# ---------------------------------------------------------------------------
# Preprocessing formulas
# ---------------------------------------------------------------------------


def minmax_normalize(x, stats: NormStats):
    lo, hi = np.asarray(stats.min, dtype=np.float64), np.asarray(stats.max, dtype=np.float64)
    span = hi - lo
    if np.any(span == 0):
        raise ConstantColumn("max equals min; min-max scaling undefined")
    return (np.asarray(x, dtype=np.float64) - lo) / span


def minmax_denormalize(u, stats: NormStats):
    lo, hi = np.asarray(stats.min, dtype=np.float64), np.asarray(stats.max, dtype=np.float64)
    return np.asarray(u, dtype=np.float64) * (hi - lo) + lo


def gas_capacity(dhg, pt):
    """Daily production divided by production time; zero on non-producing days."""
    dhg = np.asarray(dhg, dtype=np.float64)
    pt = np.asarray(pt, dtype=np.float64)
    producing = (pt > 0) & (dhg > 0)
    out = np.zeros(np.broadcast(dhg, pt).shape)
    np.divide(dhg, pt, out=out, where=producing)
    return out if out.ndim else float(out)


def first_difference(e):
    e = np.asarray(e, dtype=np.float64)
    return e[1:] - e[:-1]


def pooled_stats(groups):
    """Combined mean and standard deviation from per-group ``(n, mean, std)``.

    ``std = sqrt(sum((n_k - 1) * s_k**2) / (sum(n_k) - C))`` and
    ``mean = sum(n_k * m_k) / sum(n_k)``.  Means and stds may be per-column arrays.
    """
    groups = list(groups)
    if not groups:
        raise DegenerateGroup("no groups")
    ns = np.array([g[0] for g in groups], dtype=np.float64)
    if np.any(ns < 2):
        raise DegenerateGroup("every group needs at least two samples")
    mus = np.array([np.asarray(g[1], dtype=np.float64) for g in groups])
    sds = np.array([np.asarray(g[2], dtype=np.float64) for g in groups])
    shape = (-1,) + (1,) * (mus.ndim - 1)
    n = ns.reshape(shape)
    mean = (n * mus).sum(axis=0) / ns.sum()
    std = np.sqrt(((n - 1) * sds**2).sum(axis=0) / (ns.sum() - len(groups)))
    if mean.ndim == 0:
        return float(mean), float(std)
    return mean, std


def standardize(x, mu, sigma):
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma == 0):
        raise ConstantColumn("zero standard deviation")
    return (np.asarray(x, dtype=np.float64) - mu) / sigma


def destandardize(z, mu, sigma):
    return np.asarray(z, dtype=np.float64) * sigma + mu


# ---------------------------------------------------------------------------
# Windowing and splits
# ---------------------------------------------------------------------------


def n_windows(length: int, spec: WindowSpec) -> int:
    need = spec.history if spec.aligned else spec.history + spec.horizon
    if length < need:
        return 0
    return (length - need) // spec.stride + 1


def window_starts(length: int, spec: WindowSpec) -> np.ndarray:
    return np.arange(n_windows(length, spec)) * spec.stride


def make_windows(features, target, spec: WindowSpec) -> TrainBatch:
    """Sliding windows: ``history`` feature rows followed by ``horizon`` target values.

    With ``spec.aligned`` the targets are the ``history`` values at the same
    positions as the inputs (sequence regression).
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64).ravel()
    if x.ndim == 1:
        x = x[:, None]
    starts = window_starts(len(x), spec)
    T = spec.history
    k = x.shape[1]
    out_len = T if spec.aligned else spec.horizon
    if len(starts) == 0:
        return TrainBatch(np.zeros((0, T, k)), np.zeros((0, out_len)))
    rows = starts[:, None] + np.arange(T)[None, :]
    inputs = x[rows]
    if spec.aligned:
        targets = y[rows]
    else:
        targets = y[starts[:, None] + T + np.arange(spec.horizon)[None, :]]
    return TrainBatch(inputs, targets)


def split_dataset(n: int, fractions=(0.7, 0.2, 0.1)) -> tuple[slice, slice, slice]:
    """Chronological split; train and validation sizes round down, test takes the rest."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or sum(fractions) > 1 + 1e-9:
        raise ValueError(f"bad split fractions {fractions}")
    n_train = int(math.floor(n * fractions[0] + 1e-9))
    n_val = int(math.floor(n * fractions[1] + 1e-9))
    return slice(0, n_train), slice(n_train, n_train + n_val), slice(n_train + n_val, n)


def split_by_months(timestamps, val_months: int = 2, test_months: int = 2) -> tuple[slice, slice, slice]:
    """Test is the final ``test_months`` calendar months, validation the ones before; train is the rest."""
    months = np.asarray(timestamps).astype("datetime64[M]")
    distinct = np.unique(months)
    if len(distinct) <= val_months + test_months:
        raise ValueError("series spans too few months for the requested split")
    val_start = distinct[-(val_months + test_months)]
    test_start = distinct[-test_months]
    i_val = int(np.searchsorted(months, val_start))
    i_test = int(np.searchsorted(months, test_start))
    return slice(0, i_val), slice(i_val, i_test), slice(i_test, len(months))


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def _label_seed(kind: str, label: str, seed: int) -> np.random.Generator:
    key = [KINDS.index(kind), int(label[1:]), int(seed)]
    return np.random.default_rng(key)


def _ar1(rng, n, phi, scale=1.0):
    eps = rng.normal(0.0, scale, size=n)
    out = np.empty(n)
    acc = eps[0] / math.sqrt(max(1e-12, 1 - phi * phi))
    for i in range(n):
        acc = phi * acc + eps[i] if i else acc
        out[i] = acc
    return out


def _standardized(x):
    sd = x.std()
    return (x - x.mean()) / (sd if sd > 0 else 1.0)


def _bisect(fn, lo, hi, target, iters=80):
    """Solve fn(x) = target for increasing fn on [lo, hi], clamping at the ends."""
    if fn(lo) >= target:
        return lo
    if fn(hi) <= target:
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _calibrate_capped(shape, mean, std, cap):
    """Scale ``a`` and exponent ``g`` so that ``min(a * shape**g, cap)`` has the given mean and std."""

    def fit(g):
        base = shape**g
        a = _bisect(lambda a: np.minimum(a * base, cap).mean(), 0.0, 1e3 * cap / max(base.mean(), 1e-12), mean)
        return a, np.minimum(a * base, cap)

    g = _bisect(lambda g: fit(g)[1].std(), 0.05, 12.0, std, iters=60)
    return fit(g)[1]


def gen_series(kind: str, label: str, seed: int = 0, length: Optional[int] = None) -> SeriesDataset:
    """Synthetic dataset imitating ``label``; ``length`` defaults to the published count."""
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    stats = TABLES[kind][label]
    n = int(length) if length is not None else stats.count
    rng = _label_seed(kind, label, seed)
    return {"PV": _gen_pv, "Gas": _gen_gas, "WellLog": _gen_welllog}[kind](label, stats, n, rng)


def _gen_pv(label: str, stats: SeriesStats, n: int, rng) -> SeriesDataset:
    n_days = max(1, math.ceil(n / len(PV_HOURS)))
    start = np.datetime64("2022-01-01T00", "h")
    days = np.arange(n_days)
    hours = np.array(PV_HOURS, dtype=np.float64)
    stamps = (start + (days[:, None] * 24 + hours[None, :].astype(int)).astype("timedelta64[h]")).ravel()
    doy = (days + 1) % 365
    season = np.cos(2 * np.pi * (doy - 172) / 365.0)  # +1 midsummer, -1 midwinter
    sunrise = 6.0 - 0.8 * season
    sunset = 17.8 + 0.8 * season
    frac = (hours[None, :] - sunrise[:, None]) / (sunset - sunrise)[:, None]
    clear = np.clip(np.sin(np.pi * frac), 0.0, None) * (0.8 + 0.2 * season)[:, None]

    cloud_day = 1.0 / (1.0 + np.exp(-(_ar1(rng, n_days, 0.6, 1.2) - 0.4)))
    cloud = np.clip(cloud_day[:, None] + rng.normal(0, 0.08, size=clear.shape), 0.0, 1.0)
    efficiency = 1.0 + 0.04 * rng.normal(size=clear.shape)
    shape = np.clip(clear * (1.0 - 0.85 * cloud) * efficiency, 0.0, None)

    # inverter clipping at the published peak keeps the maximum realistic
    load = _calibrate_capped(shape, stats.mean, stats.std, stats.max)

    t2m = 283.0 + 10.0 * season[:, None] + 5.0 * clear - 2.0 * cloud + rng.normal(0, 1.0, size=clear.shape)
    ssrd = 3.2e6 * clear * (1.0 - 0.75 * cloud) * (1 + 0.05 * rng.normal(size=clear.shape))
    weather = {
        "elec_num": load / max(stats.max, 1.0) + rng.normal(0, 0.05, size=clear.shape),
        "rh": np.clip(0.75 - 0.25 * clear + 0.2 * cloud + rng.normal(0, 0.05, size=clear.shape), 0.05, 1.0),
        "u10": np.repeat(_ar1(rng, n_days, 0.7, 1.5)[:, None], len(PV_HOURS), 1) + rng.normal(0, 0.5, clear.shape),
        "v10": np.repeat(_ar1(rng, n_days, 0.7, 1.5)[:, None], len(PV_HOURS), 1) + rng.normal(0, 0.5, clear.shape),
        "t2m": t2m,
        "ssrd": np.clip(ssrd, 0.0, None),
        "strd": 1.0e6 * (1.0 + 0.3 * cloud) + 2.0e4 * (t2m - 283.0) + rng.normal(0, 2e4, clear.shape),
        "tsr": np.clip(0.9 * ssrd + rng.normal(0, 5e4, clear.shape), 0.0, None),
        "tcc": cloud,
    }
    cols = ["load"] + list(PV_WEATHER)
    values = np.column_stack([load.ravel()] + [weather[c].ravel() for c in PV_WEATHER])[:n]
    return SeriesDataset(label, "PV", cols, values, "load", stamps[:n], "time")


def _shut_in_mask(rng, n, zero_fraction):
    """Boolean mask of shut-in days made of short runs, covering about ``zero_fraction``."""
    mask = np.zeros(n, dtype=bool)
    if zero_fraction <= 0 or n < 3:
        return mask
    target = int(round(zero_fraction * n))
    while mask.sum() < target:
        start = int(rng.integers(1, n - 1))
        run = int(min(rng.geometric(0.35), target - mask.sum()))
        mask[start : start + run] = True
    return mask


def _gen_gas(label: str, stats: SeriesStats, n: int, rng) -> SeriesDataset:
    mu, sd = stats.mean, stats.std
    # zero days alone add variance mu^2 f/(1-f); keep them well inside the budget
    zero_fraction = min(0.08, 0.5 * sd * sd / (sd * sd + mu * mu))
    shut = _shut_in_mask(rng, n, zero_fraction)
    f = shut.mean()
    t = np.arange(n, dtype=np.float64)
    tau = n * rng.uniform(0.4, 1.2)
    trend = np.exp(-t / tau)
    noise = _ar1(rng, n, rng.uniform(0.5, 0.9), 1.0) * rng.uniform(0.1, 0.3)
    # flush production right after a shut-in
    flush = np.zeros(n)
    reopen = np.flatnonzero(shut[:-1] & ~shut[1:]) + 1
    for i in reopen:
        span = np.arange(i, min(n, i + 6))
        flush[span] += 0.5 * np.exp(-(span - i) / 2.0)
    raw = trend * (1.0 + noise) + flush * trend

    prod = ~shut
    m_v = mu / (1.0 - f)
    var_v = (sd * sd + mu * mu) / (1.0 - f) - m_v * m_v
    s_v = math.sqrt(max(var_v, 1e-12))
    z = np.zeros(n)
    z[prod] = _standardized(raw[prod])
    dhg = np.where(prod, np.clip(m_v + s_v * z, 0.02 * m_v, None), 0.0)

    pt = np.where(prod, 24.0, 0.0)
    partial = prod & (rng.random(n) < 0.15)
    pt[partial] = rng.uniform(6.0, 23.0, size=partial.sum())
    dhg = np.where(partial, dhg * pt / 24.0, dhg)
    # restore the calibrated moments after the partial-day reduction
    on = dhg > 0
    dhg[on] = m_v + s_v * _standardized(dhg[on])
    dhg = np.where(on, np.clip(dhg, 0.02 * m_v, None), 0.0)

    rate = gas_capacity(dhg, pt)
    p0 = rng.uniform(18.0, 30.0)
    casing = p0 * (0.35 + 0.65 * np.exp(-t / (tau * 1.3))) + rng.normal(0, 0.3, n)
    casing = np.where(shut, casing + 2.0, casing)
    tubing = casing - rng.uniform(0.8, 1.6) * rate / max(rate.max(), 1e-9) * 6.0 + rng.normal(0, 0.3, n)
    values = np.column_stack([dhg, pt, casing, tubing])
    return SeriesDataset(label, "Gas", list(GAS_RAW), values, "DHG", t, "day")


def _gen_welllog(label: str, stats: SeriesStats, n: int, rng) -> SeriesDataset:
    depth = 1500.0 + 0.5 * np.arange(n)
    layers = np.repeat(rng.normal(0, 1.0, size=n // 40 + 1), 40)[:n]
    litho = 0.6 * _standardized(_ar1(rng, n, 0.97, 1.0)) + 0.8 * layers
    skew = rng.uniform(0.5, 0.9)
    base = np.exp(skew * _standardized(litho))
    dtsm = stats.mean + stats.std * _standardized(base + rng.normal(0, 0.05, n))

    a = 1.0 + 0.15 * rng.normal(size=3)
    gr = 45.0 + 35.0 / (1.0 + np.exp(-a[0] * litho)) + rng.normal(0, 3.0, n)
    at30 = 10 ** (1.2 - 0.35 * a[1] * litho + rng.normal(0, 0.08, n))
    rhoz = 2.45 - 0.09 * a[2] * litho + rng.normal(0, 0.02, n)
    values = np.column_stack([gr, at30, rhoz, dtsm])
    return SeriesDataset(label, "WellLog", list(WELL_CURVES) + ["DTSM"], values, "DTSM", depth, "depth")


def add_gas_features(ds: SeriesDataset) -> SeriesDataset:
    """Append ``E_gas`` and its first difference (0 on the first day)."""
    e = gas_capacity(ds.column("DHG"), ds.column("PT"))
    de = np.concatenate([[0.0], first_difference(e)])
    return ds.with_columns(["E_gas", "dE_gas"], [e, de])
