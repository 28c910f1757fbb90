"""Swarm Learning loop, the LL/CL baselines and the experiment matrix.

Randomness flows from named seeds only: the model seed fixes the initial
weights, keys and every minibatch order (``[seed, epoch, device index]``), the
data seed fixes the synthetic series and ``selseed`` fixes deletion paths.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .chaincore import Account, Func, sign_message
from .config import CL, LL, SL, ExperimentConfig, Stopping
from .consensus import Behavior, CommitResult, CommitStatus, Mutation, Network, NetworkConfig, parse_scenario
from .contract import SwarmContract, dequantize, init_contract, quantize, screen_update
from .datakit import (
    ConstantColumn,
    NormStats,
    WindowSpec,
    add_gas_features,
    gen_series,
    make_windows,
    minmax_normalize,
    pooled_stats,
    split_by_months,
    split_dataset,
    standardize,
)
from .stats import Comparison, TimingLedger, summarize_results
from .trainer import GruModel, LocalUpdateConfig, TrainBatch, evaluate, local_update

Clock = Callable[[], float]


class ConsensusStalled(RuntimeError):
    """A round could not gather a quorum for any proposer."""


# ---------------------------------------------------------------------------
# Stopping controller
# ---------------------------------------------------------------------------


class Decision(enum.Enum):
    CONTINUE = "Continue"
    HALVE = "HalveLR"
    STOP = "Stop"


@dataclass
class StoppingState:
    learning_rate: float
    c_nobest: int = 0
    c_switch: int = 0
    c_neswitch: int = 0
    best_val: float = math.inf
    best_epoch: int = 0
    w_best: Optional[np.ndarray] = None
    epoch: int = 0


def stopping_step(state: StoppingState, val_loss: float, e: int, constants: Stopping, weights=None) -> Decision:
    """One epoch of the validation-driven controller; mutates ``state``.

    The stop criterion is evaluated from the counters as they stand when the
    epoch begins; a halving earned this epoch can only stop a later one.
    """
    if e < 1:
        raise ValueError("epochs are counted from 1")
    criterion = state.c_neswitch >= constants.c_maxneswitch or state.c_switch >= constants.c_maxswitch
    state.epoch = e
    if val_loss < state.best_val:
        state.best_val = float(val_loss)
        state.best_epoch = e
        state.w_best = None if weights is None else np.array(weights, dtype=np.float64, copy=True)
        state.c_nobest = 0
        state.c_neswitch = 0
    else:
        state.c_nobest += 1
    if e > constants.e_pre and criterion:
        return Decision.STOP
    if state.c_nobest >= constants.c_switchcriterion and e > constants.e_pre:
        state.learning_rate /= 2.0
        state.c_neswitch += 1
        state.c_switch += 1
        state.c_nobest = -constants.c_tol
        return Decision.HALVE
    return Decision.CONTINUE


# ---------------------------------------------------------------------------
# Data assembly
# ---------------------------------------------------------------------------


@dataclass
class DatasetSplits:
    label: str
    train: TrainBatch
    val: TrainBatch
    test: TrainBatch


@dataclass
class FoldData:
    fold: int
    internal: dict[str, DatasetSplits]
    external: dict[str, TrainBatch]
    input_dim: int
    output_dim: int


def window_spec(cfg: ExperimentConfig) -> WindowSpec:
    w = cfg.window
    return WindowSpec(w.history, w.horizon, w.stride, w.aligned)


def _target_name(kind: str) -> str:
    return {"PV": "load", "Gas": "E_gas", "WellLog": "DTSM"}[kind]


def _load(cfg: ExperimentConfig, label: str):
    ds = gen_series(cfg.kind, label, cfg.data_seed, cfg.series_length)
    if cfg.kind == "Gas":
        ds = add_gas_features(ds)
    return ds


def _columns(cfg: ExperimentConfig) -> list[str]:
    target = _target_name(cfg.kind)
    cols = list(cfg.features)
    return cols if target in cols else cols + [target]


def _segments(cfg: ExperimentConfig, ds) -> tuple[slice, slice, slice]:
    if cfg.kind == "PV":
        return split_by_months(ds.index, cfg.val_months, cfg.test_months)
    return split_dataset(len(ds), tuple(cfg.split))


def _minmax(x: np.ndarray, ref: np.ndarray) -> np.ndarray:
    stats = NormStats.of(ref)
    try:
        return minmax_normalize(x, stats)
    except ConstantColumn:
        span = np.where(stats.max > stats.min, stats.max - stats.min, 1.0)
        return (x - stats.min) / span


def _windows(cfg, values, cols, sl=slice(None)) -> TrainBatch:
    feats = values[sl][:, [cols.index(c) for c in cfg.features]]
    target = values[sl][:, cols.index(_target_name(cfg.kind))]
    return make_windows(feats, target, window_spec(cfg))


def prepare_fold(cfg: ExperimentConfig, fold: int, internal: Optional[Sequence[str]] = None) -> FoldData:
    """Normalized windows for the fold's internal and external datasets.

    PV and Gas use per-dataset min-max scaling fit on each dataset's own
    training rows (all rows for an external dataset).  Well logs are
    standardized with statistics pooled from the internal datasets'
    training-row summaries, applied unchanged to the external ones.
    """
    ext_labels = cfg.external_labels(fold)
    int_labels = list(internal) if internal is not None else cfg.internal_labels(fold)
    cols = _columns(cfg)
    raw = {lab: _load(cfg, lab) for lab in int_labels + ext_labels}
    mats = {lab: raw[lab].select(cols) for lab in raw}
    segs = {lab: _segments(cfg, raw[lab]) for lab in int_labels}

    norm: dict[str, np.ndarray] = {}
    if cfg.kind == "WellLog":
        groups = []
        for lab in int_labels:
            tr = mats[lab][segs[lab][0]]
            groups.append((len(tr), tr.mean(axis=0), tr.std(axis=0, ddof=1)))
        mu, sigma = pooled_stats(groups)
        for lab in raw:
            norm[lab] = standardize(mats[lab], mu, sigma)
    else:
        for lab in int_labels:
            norm[lab] = _minmax(mats[lab], mats[lab][segs[lab][0]])
        for lab in ext_labels:
            norm[lab] = _minmax(mats[lab], mats[lab])

    internal_splits = {}
    for lab in int_labels:
        tr, va, te = segs[lab]
        internal_splits[lab] = DatasetSplits(
            lab, _windows(cfg, norm[lab], cols, tr), _windows(cfg, norm[lab], cols, va), _windows(cfg, norm[lab], cols, te)
        )
    external = {lab: _windows(cfg, norm[lab], cols) for lab in ext_labels}
    sample = next(iter(internal_splits.values())).train
    return FoldData(fold, internal_splits, external, sample.inputs.shape[2], sample.targets.shape[1])


@dataclass
class DeviceShard:
    """A device's local data: one or more internal datasets."""

    id: str
    index: int
    labels: list[str]
    train: TrainBatch
    val: TrainBatch
    tests: dict[str, TrainBatch]

    @property
    def data_count(self) -> int:
        return len(self.train)


def device_id(index: int, orgs: int) -> str:
    return f"dev-{index % orgs}-{index // orgs}"


def build_devices(cfg: ExperimentConfig, data: FoldData, assignment: Optional[Sequence[Sequence[str]]] = None) -> list[DeviceShard]:
    """Default assignment: one internal dataset per device, devices spread round-robin over orgs."""
    if assignment is None:
        assignment = [[lab] for lab in data.internal]
    devices = []
    for i, labels in enumerate(assignment):
        parts = [data.internal[lab] for lab in labels]
        devices.append(
            DeviceShard(
                device_id(i, cfg.topology.orgs),
                i,
                list(labels),
                TrainBatch.concat([p.train for p in parts]),
                TrainBatch.concat([p.val for p in parts]),
                {p.label: p.test for p in parts},
            )
        )
    return devices


def init_model(cfg: ExperimentConfig, data: FoldData, seed: int) -> GruModel:
    return GruModel.init(
        data.input_dim, cfg.hidden_dim, data.output_dim, cfg.bidirectional, cfg.output_activation, seed=seed
    )


# ---------------------------------------------------------------------------
# Run reports
# ---------------------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    learning_rate: float
    decision: str


@dataclass
class RunReport:
    scheme: str
    kind: str
    fold: int
    seed: int
    model_id: str
    history: list[EpochRecord] = field(default_factory=list)
    e_final: int = 0
    best_epoch: int = 0
    best_val: float = math.inf
    w_best: Optional[np.ndarray] = None
    test_mse: dict[tuple[str, str], float] = field(default_factory=dict)  # (P_in|P_ex, label)
    timing: Optional[TimingLedger] = None

    def rows(self) -> list[list]:
        return [
            [self.kind, self.fold, self.seed, self.scheme, self.model_id, dset, label, repr(mse), self.e_final, self.best_epoch]
            for (dset, label), mse in sorted(self.test_mse.items())
        ]


RUNS_HEADER = ["kind", "fold", "seed", "scheme", "model", "set", "dataset", "mse", "e_final", "best_epoch"]


def _evaluate_report(report: RunReport, model: GruModel, tests: dict[str, TrainBatch], external: dict[str, TrainBatch]):
    final = model.with_weights(report.w_best)
    for lab, batch in tests.items():
        report.test_mse[("P_in", lab)] = evaluate(final, batch)
    for lab, batch in external.items():
        report.test_mse[("P_ex", lab)] = evaluate(final, batch)


def _local_cfg(cfg: ExperimentConfig, lr: float) -> LocalUpdateConfig:
    return LocalUpdateConfig(cfg.local.local_epochs, cfg.local.batch_size, lr)


# ---------------------------------------------------------------------------
# Local and centralized learning
# ---------------------------------------------------------------------------


def _train_alone(cfg, model, train, val, seed, stream) -> tuple[list[EpochRecord], StoppingState]:
    state = StoppingState(cfg.local.learning_rate)
    w = model.flatten()
    history = []
    for e in range(1, cfg.stopping.e_max + 1):
        lr = state.learning_rate
        w, (tl, vl) = local_update(model.with_weights(w), train, _local_cfg(cfg, lr), seed=[seed, e, stream], val=val)
        decision = stopping_step(state, vl, e, cfg.stopping, w)
        history.append(EpochRecord(e, tl, vl, lr, decision.value))
        if decision == Decision.STOP:
            break
    return history, state


def run_local_learning(cfg: ExperimentConfig, data: FoldData, devices: Sequence[DeviceShard], seed: int) -> list[RunReport]:
    """One model per device trained on its own shard only."""
    reports = []
    for dev in devices:
        model = init_model(cfg, data, seed)
        history, state = _train_alone(cfg, model, dev.train, dev.val, seed, dev.index)
        rep = RunReport(LL, cfg.kind, data.fold, seed, dev.id, history, history[-1].epoch, state.best_epoch, state.best_val, state.w_best)
        _evaluate_report(rep, model, dev.tests, data.external)
        reports.append(rep)
    return reports


def run_centralized_learning(cfg: ExperimentConfig, data: FoldData, devices: Sequence[DeviceShard], seed: int) -> RunReport:
    """One model on the union of all internal shards."""
    model = init_model(cfg, data, seed)
    train = TrainBatch.concat([d.train for d in devices])
    val = TrainBatch.concat([d.val for d in devices])
    history, state = _train_alone(cfg, model, train, val, seed, len(devices))
    rep = RunReport(CL, cfg.kind, data.fold, seed, "central", history, history[-1].epoch, state.best_epoch, state.best_val, state.w_best)
    tests = {lab: t for d in devices for lab, t in d.tests.items()}
    _evaluate_report(rep, model, tests, data.external)
    return rep


# ---------------------------------------------------------------------------
# Swarm learning
# ---------------------------------------------------------------------------


@dataclass
class RoundOutcome:
    epoch: int
    commit: Optional[CommitResult]
    aggregated: bool
    weights: Optional[np.ndarray]
    train_loss: float
    val_loss: float
    flagged: list[str]
    similarity: dict[str, float]

    @property
    def status(self) -> Optional[CommitStatus]:
        return None if self.commit is None else self.commit.status


class SwarmSession:
    """A deployed contract, the consortium network and the registered devices."""

    def __init__(
        self,
        cfg: ExperimentConfig,
        devices: Sequence[DeviceShard],
        model: GruModel,
        seed: int,
        clock: Clock = time.perf_counter,
    ):
        t0 = clock()
        self.cfg = cfg
        self.devices = list(devices)
        self.model = model
        self.seed = seed
        self.clock = clock
        topo = cfg.topology
        per_org = max(1, math.ceil(len(self.devices) / topo.orgs))
        self.net_config = NetworkConfig(topo.orgs, topo.nodes_per_org, per_org, topo.quorum, topo.schedule_seed)
        contract = init_contract(model.size, cfg.scale, cfg.p, cfg.lam, model.flatten(), cfg.strict_paper_weights)
        for dev in self.devices:
            contract.register_device(dev.id, dev.data_count)
        self.network = Network(self.net_config, contract, key_seed=seed)
        self.accounts = {dev.id: Account.generate(dev.id, seed) for dev in self.devices}
        for acct in self.accounts.values():
            self.network.register_account(acct)
        self.fault_plan = parse_scenario(cfg.faults) if cfg.faults else {}
        self.timing = TimingLedger()
        self.timing.t_ini = clock() - t0

    @property
    def contract(self) -> SwarmContract:
        return self.network.contract_view()

    def current_weights(self) -> np.ndarray:
        return dequantize(self.contract.aggregated)

    def inject_fault(self, node_id: str, behavior, mutation=None) -> None:
        self.network.inject_fault(node_id, Behavior(behavior), None if mutation is None else Mutation(mutation))

    def accounts_doc(self) -> dict[str, str]:
        return {k: v.hex() for k, v in sorted(self.network.keys.items())}


def _malicious(kind: str, w_start: np.ndarray, w_new: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if kind == "negate":
        return -w_new
    if kind == "noise":
        return rng.normal(0.0, max(1.0, float(np.abs(w_start).max())), w_new.shape)
    if kind == "scale":
        return w_start + 100.0 * (w_new - w_start)
    raise ValueError(f"unknown malicious behavior {kind!r}")


def run_swarm_round(session: SwarmSession, epoch: int, learning_rate: float) -> RoundOutcome:
    """Local updates on every device, then one block of uploads and aggregation calls."""
    cfg, net, clock = session.cfg, session.network, session.clock
    for node_id, behavior, mutation in session.fault_plan.get(epoch, []):
        net.inject_fault(node_id, behavior, mutation)
    prev = net.tip_hash
    receiver = session.contract.account_id
    pending, flagged, sims, timings = [], [], {}, {}
    for dev in session.devices:
        node = net.nodes[session.net_config.node_for_device(dev.id)]
        t0 = clock()
        agg, _ = node.contract.query_aggregated()
        w_start = dequantize(agg)
        t1 = clock()
        w_new, losses = local_update(
            session.model.with_weights(w_start), dev.train, _local_cfg(cfg, learning_rate), seed=[session.seed, epoch, dev.index], val=dev.val
        )
        t2 = clock()
        attack = cfg.malicious_clients.get(dev.id)
        if attack:
            w_new = _malicious(attack, w_start, w_new, np.random.default_rng([session.seed, epoch, dev.index, 1]))
        payload = quantize(w_new, cfg.scale)
        sims[dev.id] = screen_update(node.contract, payload)
        if cfg.screen_threshold is not None and sims[dev.id] < cfg.screen_threshold:
            flagged.append(dev.id)
        else:
            acct = session.accounts[dev.id]
            common = dict(prev_hash=prev, receiver=receiver, timestamp=epoch)
            pending.append(sign_message(acct, func=Func.UPLOAD, payload=payload, losses=losses, **common))
            pending.append(sign_message(acct, func=Func.AGGREGATE, **common))
        timings[dev.id] = (t1 - t0, t2 - t1, clock() - t2)
    if not pending:
        session.timing.add_round(timings, 0.0)
        return RoundOutcome(epoch, None, False, None, math.nan, math.nan, flagged, sims)
    t0 = clock()
    result = net.propose_and_commit(pending)
    session.timing.add_round(timings, clock() - t0)
    aggregated = result.committed and any(r.func == "Aggregate" and r.ok for r in result.receipts)
    train_loss = val_loss = math.nan
    if result.committed:
        counts = {a: r.data_count for a, r in session.contract.devices.items()}
        ups = [m for m in result.block.messages if m.func == Func.UPLOAD]
        total = sum(counts[m.owner] for m in ups)
        train_loss = sum(counts[m.owner] * m.losses[0] for m in ups) / total
        val_loss = sum(counts[m.owner] * m.losses[1] for m in ups) / total
    weights = session.current_weights() if aggregated else None
    return RoundOutcome(epoch, result, aggregated, weights, train_loss, val_loss, flagged, sims)


def run_swarm_learning(
    cfg: ExperimentConfig,
    data: FoldData,
    devices: Sequence[DeviceShard],
    seed: int,
    clock: Clock = time.perf_counter,
) -> tuple[RunReport, SwarmSession]:
    """Swarm rounds under the stopping controller.

    The controller sees the data-count weighted mean of the validation losses
    carried by the committed uploads; its learning-rate decision is broadcast
    to every device for the next round.
    """
    model = init_model(cfg, data, seed)
    session = SwarmSession(cfg, devices, model, seed, clock)
    state = StoppingState(cfg.local.learning_rate)
    history = []
    e_final = 0
    for e in range(1, cfg.stopping.e_max + 1):
        lr = state.learning_rate
        out = run_swarm_round(session, e, lr)
        e_final = e
        if out.status == CommitStatus.STALLED:
            raise ConsensusStalled(f"round {e} stalled")
        if not out.aggregated:
            history.append(EpochRecord(e, out.train_loss, out.val_loss, lr, "NoAggregate"))
            continue
        decision = stopping_step(state, out.val_loss, e, cfg.stopping, out.weights)
        history.append(EpochRecord(e, out.train_loss, out.val_loss, lr, decision.value))
        if decision == Decision.STOP:
            break
    if state.w_best is None:
        state.w_best = session.current_weights()
    rep = RunReport(SL, cfg.kind, data.fold, seed, "swarm", history, e_final, state.best_epoch, state.best_val, state.w_best, timing=session.timing)
    tests = {lab: t for d in devices for lab, t in d.tests.items()}
    _evaluate_report(rep, model, tests, data.external)
    return rep, session


# ---------------------------------------------------------------------------
# Experiment matrix
# ---------------------------------------------------------------------------


def compare_reports(kind: str, reports: Sequence[RunReport]) -> list[Comparison]:
    """Paired cells for one (fold, seed).

    LL: every LL device model against SL on every external dataset, and each
    internal dataset's owner model against SL on that dataset.  CL: the
    central model against SL on every dataset.
    """
    sl = next(r for r in reports if r.scheme == SL)
    cells = []
    for r in reports:
        if r.scheme == SL:
            continue
        for (dset, lab), mse in sorted(r.test_mse.items()):
            key = (r.fold, r.seed, dset, lab, r.model_id)
            cells.append(Comparison(kind, dset, r.scheme, sl.test_mse[(dset, lab)], mse, key))
    return cells


@dataclass
class ExperimentResult:
    reports: list[RunReport]
    cells: list[Comparison]
    summary: list
    first_session: Optional[SwarmSession] = None

    def run_rows(self) -> list[list]:
        return [row for r in self.reports for row in r.rows()]


def run_fold_seed(cfg: ExperimentConfig, data: FoldData, devices, seed: int, clock: Clock = time.perf_counter):
    reports: list[RunReport] = []
    session = None
    if LL in cfg.schemes:
        reports += run_local_learning(cfg, data, devices, seed)
    if CL in cfg.schemes:
        reports.append(run_centralized_learning(cfg, data, devices, seed))
    if SL in cfg.schemes:
        rep, session = run_swarm_learning(cfg, data, devices, seed, clock)
        reports.append(rep)
    return reports, session


def run_primary_experiment(cfg: ExperimentConfig, clock: Clock = time.perf_counter) -> ExperimentResult:
    """Folds x model seeds; LL vs SL and CL vs SL on internal and external test sets."""
    reports, cells, first = [], [], None
    for fold in cfg.fold_indices():
        data = prepare_fold(cfg, fold)
        devices = build_devices(cfg, data)
        for seed in cfg.seeds:
            reps, session = run_fold_seed(cfg, data, devices, seed, clock)
            first = first or session
            reports += reps
            if SL in cfg.schemes and len(cfg.schemes) > 1:
                cells += compare_reports(cfg.kind, reps)
    return ExperimentResult(reports, cells, summarize_results(cells), first)


# -- data volume ------------------------------------------------------------


def volume_paths(labels: Sequence[str], n_groups: int, selseed: int) -> list[list[list[str]]]:
    """Deletion path over a random partition of ``labels`` into ``n_groups`` sets.

    Each step removes one randomly chosen dataset from every set and drops
    sets that become empty; the first step holds every dataset.
    """
    rng = np.random.default_rng(selseed)
    order = [labels[i] for i in rng.permutation(len(labels))]
    groups = [sorted(order[g::n_groups], key=labels.index) for g in range(n_groups)]
    groups = [g for g in groups if g]
    path = [groups]
    while any(len(g) > 1 for g in groups):
        drops = [int(rng.integers(len(g))) for g in groups]
        groups = [[x for j, x in enumerate(g) if j != d] for g, d in zip(groups, drops)]
        groups = [g for g in groups if g]
        path.append(groups)
    return path


@dataclass
class SweepPoint:
    axis: str
    step: int
    n_devices: int
    datasets_per_device: float
    n_seeds: int
    in_mean: float
    in_std: float
    ex_mean: float
    ex_std: float


SWEEP_HEADER = ["axis", "step", "n_devices", "datasets_per_device", "n_seeds", "in_mean", "in_std", "ex_mean", "ex_std"]


def sweep_row(p: SweepPoint) -> list:
    return [p.axis, p.step, p.n_devices, repr(p.datasets_per_device), p.n_seeds, repr(p.in_mean), repr(p.in_std), repr(p.ex_mean), repr(p.ex_std)]


def _sweep_point(cfg, data, assignment, axis, step, clock) -> SweepPoint:
    devices = build_devices(cfg, data, assignment)
    ins, exs = [], []
    for seed in cfg.seeds:
        rep, _ = run_swarm_learning(cfg, data, devices, seed, clock)
        ins.append(np.mean([v for (s, _), v in rep.test_mse.items() if s == "P_in"]))
        exs.append(np.mean([v for (s, _), v in rep.test_mse.items() if s == "P_ex"]))
    per_dev = float(np.mean([len(a) for a in assignment]))
    return SweepPoint(axis, step, len(assignment), per_dev, len(cfg.seeds), float(np.mean(ins)), float(np.std(ins)), float(np.mean(exs)), float(np.std(exs)))


def run_volume_sweep(cfg: ExperimentConfig, selseed: int, clock: Clock = time.perf_counter) -> list[SweepPoint]:
    """Fold-0 SL runs along two deletion paths.

    ``fixed_devices``: ``volume_groups`` devices whose dataset counts shrink.
    ``fixed_datasets``: one dataset per device, the device count shrinks.
    """
    fold = 0
    labels = cfg.internal_labels(fold)
    data = prepare_fold(cfg, fold)
    points = []
    for step, groups in enumerate(volume_paths(labels, cfg.volume_groups, selseed)):
        points.append(_sweep_point(cfg, data, groups, "fixed_devices", step, clock))
    # an independent path whose surviving datasets each become their own device
    for step, groups in enumerate(volume_paths(labels, cfg.volume_groups, selseed + 10_000)):
        singles = [[lab] for lab in labels if any(lab in g for g in groups)]
        points.append(_sweep_point(cfg, data, singles, "fixed_datasets", step, clock))
    return points


# -- local epochs ------------------------------------------------------------


def run_local_epoch_sweep(cfg: ExperimentConfig, clock: Clock = time.perf_counter) -> list[SweepPoint]:
    """SL with more local passes per round and proportionally fewer rounds."""
    budget = cfg.local.local_epochs * cfg.stopping.e_max
    data = prepare_fold(cfg, cfg.local_epoch_fold)
    points = []
    for step, e_local in enumerate(cfg.local_epoch_grid):
        sub = cfg.replace(
            local={**cfg.to_dict()["local"], "local_epochs": e_local},
            stopping={**cfg.to_dict()["stopping"], "e_max": max(1, budget // e_local)},
        )
        assignment = [[lab] for lab in data.internal]
        pt = _sweep_point(sub, data, assignment, f"local_epochs={e_local}", step, clock)
        points.append(pt)
    return points
