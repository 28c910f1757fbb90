"""Rank test, result summaries and the timing ledger."""

from __future__ import annotations

import csv
import enum
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

EXACT_LIMIT = 16


class Method(enum.Enum):
    EXACT = "ExactEnumeration"
    NORMAL = "NormalApproximation"


@dataclass(frozen=True)
class UTestResult:
    u_a: float
    u_b: float
    p_value: float
    method: Method

    @property
    def statistic(self) -> float:
        return self.u_a


def mann_whitney_one_tailed(a, b, alternative: str = "less", exact_limit: int = EXACT_LIMIT) -> UTestResult:
    """One-tailed Mann-Whitney U test of ``a`` against ``b``.

    ``U_A = R_A - n_A (n_A + 1) / 2`` counts pairs with ``a > b`` (ties count
    one half).  For ``alternative="less"`` (``a`` tends to be smaller) the p
    value is ``P(U <= U_A)`` under random relabelling of the pooled ranks; it
    is computed by enumerating every relabelling when ``n_A + n_B <=
    exact_limit`` and from the tie-corrected normal approximation with
    continuity correction otherwise.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na, nb = len(a), len(b)
    if na == 0 or nb == 0:
        raise ValueError("both samples must be non-empty")
    if alternative not in ("less", "greater"):
        raise ValueError(f"alternative must be 'less' or 'greater', got {alternative!r}")
    ranks = rankdata(np.concatenate([a, b]))
    offset = na * (na + 1) / 2.0
    u_a = float(ranks[:na].sum() - offset)
    u_b = na * nb - u_a
    if na + nb <= exact_limit:
        p = _exact_p(ranks, na, u_a, alternative, offset)
        method = Method.EXACT
    else:
        p = _normal_p(ranks, na, nb, u_a, alternative)
        method = Method.NORMAL
    return UTestResult(u_a, u_b, float(min(1.0, max(0.0, p))), method)


def _exact_p(ranks, na, u_obs, alternative, offset):
    n = len(ranks)
    combos = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(n), na)), dtype=np.intp
    ).reshape(-1, na)
    u = ranks[combos].sum(axis=1) - offset
    eps = 1e-9
    hits = np.count_nonzero(u <= u_obs + eps) if alternative == "less" else np.count_nonzero(u >= u_obs - eps)
    return hits / len(u)


def _normal_p(ranks, na, nb, u_obs, alternative):
    n = na + nb
    _, counts = np.unique(ranks, return_counts=True)
    tie_term = float(((counts**3) - counts).sum()) / (n * (n - 1))
    var = na * nb / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return 1.0
    mean = na * nb / 2.0
    if alternative == "less":
        z = (u_obs - mean + 0.5) / math.sqrt(var)
        return float(ndtr(z))
    z = (u_obs - mean - 0.5) / math.sqrt(var)
    return float(ndtr(-z))


# ---------------------------------------------------------------------------
# Summaries in the layout of the results table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    """One paired cell: SL's test MSE against a baseline scheme's on the same data."""

    kind: str
    dataset_set: str  # "P_in" or "P_ex"
    baseline: str  # "LL" or "CL"
    sl_mse: float
    other_mse: float
    key: tuple = ()


@dataclass(frozen=True)
class SummaryRow:
    kind: str
    dataset_set: str
    baseline: str
    n_cells: int
    sl_best_pct: float
    p_value: float
    mean_better: str


def summarize_results(cells: Iterable[Comparison]) -> list[SummaryRow]:
    """Share of cells where SL is strictly better, one-tailed p (SL smaller), lower-mean scheme."""
    groups: dict[tuple, list[Comparison]] = defaultdict(list)
    for c in cells:
        groups[(c.kind, c.dataset_set, c.baseline)].append(c)
    rows = []
    for (kind, dset, base), items in sorted(groups.items()):
        # order-independent input to the test
        items = sorted(items, key=lambda c: (c.sl_mse, c.other_mse, c.key))
        sl = np.array([c.sl_mse for c in items])
        other = np.array([c.other_mse for c in items])
        pct = 100.0 * float(np.mean(sl < other))
        p = mann_whitney_one_tailed(sl, other, "less").p_value
        m_sl, m_other = float(sl.mean()), float(other.mean())
        better = "SL" if m_sl < m_other else base if m_other < m_sl else "tie"
        rows.append(SummaryRow(kind, dset, base, len(items), pct, p, better))
    return rows


SUMMARY_HEADER = [
    "kind",
    "set",
    "LL_vs_SL_SL_best",
    "LL_vs_SL_p_value",
    "LL_vs_SL_mean_better",
    "CL_vs_SL_SL_best",
    "CL_vs_SL_p_value",
    "CL_vs_SL_mean_better",
]


def summary_table(rows: Sequence[SummaryRow]) -> list[list[str]]:
    """Wide layout: one line per (kind, set) with LL and CL comparison blocks."""
    by_key: dict[tuple, dict[str, SummaryRow]] = defaultdict(dict)
    for r in rows:
        by_key[(r.kind, r.dataset_set)][r.baseline] = r
    table = []
    for (kind, dset), per in sorted(by_key.items(), key=lambda kv: (kv[0][0], kv[0][1] != "P_ex")):
        line = [kind, dset]
        for base in ("LL", "CL"):
            r = per.get(base)
            line += ["", "", ""] if r is None else [f"{r.sl_best_pct:.2f}%", f"{r.p_value:.3f}", r.mean_better]
        table.append(line)
    return table


def write_summary_csv(rows: Sequence[SummaryRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        w.writerows(summary_table(rows))


# ---------------------------------------------------------------------------
# Timing ledger
# ---------------------------------------------------------------------------


@dataclass
class TimingLedger:
    """Phase durations: total = t_ini + sum over rounds of the slowest device + t_agg."""

    t_ini: float = 0.0
    rounds: list[dict[str, tuple[float, float, float]]] = field(default_factory=list)
    t_agg: list[float] = field(default_factory=list)

    def add_round(self, entries: Mapping[str, tuple[float, float, float]], t_agg: float) -> None:
        for dev, phases in entries.items():
            if any(v < 0 for v in phases):
                raise ValueError(f"negative duration for {dev}")
        if t_agg < 0:
            raise ValueError("negative aggregation time")
        self.rounds.append({k: tuple(float(x) for x in v) for k, v in entries.items()})
        self.t_agg.append(float(t_agg))

    @property
    def t_locupdate(self) -> float:
        return float(sum(max((sum(v) for v in r.values()), default=0.0) for r in self.rounds))

    @property
    def t_agg_total(self) -> float:
        return float(sum(self.t_agg))

    @property
    def total(self) -> float:
        return self.t_ini + self.t_locupdate + self.t_agg_total

    def max_training(self) -> float:
        per_dev: dict[str, float] = defaultdict(float)
        for r in self.rounds:
            for dev, (_, train, _) in r.items():
                per_dev[dev] += train
        return max(per_dev.values(), default=0.0)

    def merge(self, other: "TimingLedger") -> "TimingLedger":
        return TimingLedger(self.t_ini + other.t_ini, self.rounds + other.rounds, self.t_agg + other.t_agg)


def timing_report(ledger: TimingLedger) -> dict[str, float]:
    return {
        "t_ini": ledger.t_ini,
        "t_locupdate": ledger.t_locupdate,
        "t_agg": ledger.t_agg_total,
        "t_total": ledger.total,
        "t_locupdate+t_agg": ledger.t_locupdate + ledger.t_agg_total,
        "max_sum_loctraining": ledger.max_training(),
    }
