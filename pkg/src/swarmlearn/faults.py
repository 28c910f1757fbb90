"""Scripted adversary scenarios run against a small swarm."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import ExperimentConfig, Topology, Window, default_config
from .consensus import Behavior, CommitStatus, Mutation
from .orchestrator import SwarmSession, build_devices, init_model, prepare_fold, run_swarm_round


@dataclass(frozen=True)
class ScenarioResult:
    name: str
    passed: bool
    detail: str


def scenario_config(**changes) -> ExperimentConfig:
    """Four devices on a 2 x 2 node consortium, short gas series."""
    base = default_config("Gas").replace(
        labels=[f"W{i}" for i in range(1, 7)],
        series_length=120,
        hidden_dim=4,
        window=Window(history=5).__dict__,
        topology=Topology(orgs=2, nodes_per_org=2).__dict__,
    )
    return base.replace(**changes) if changes else base


def _session(cfg: ExperimentConfig, seed: int = 0) -> SwarmSession:
    data = prepare_fold(cfg, 0)
    devices = build_devices(cfg, data)
    return SwarmSession(cfg, devices, init_model(cfg, data, seed), seed)


def _run(session: SwarmSession, rounds: int, lr: float):
    return [run_swarm_round(session, e, lr) for e in range(1, rounds + 1)]


def bad_packager(cfg: Optional[ExperimentConfig] = None, rounds: int = 3, mutation: str = "flip_payload") -> ScenarioResult:
    cfg = cfg or scenario_config()
    lr = cfg.local.learning_rate
    clean = _session(cfg)
    _run(clean, rounds, lr)
    faulty = _session(cfg)
    leader = faulty.network.select_packager(faulty.network.height)
    faulty.inject_fault(leader, Behavior.BAD_PACKAGER, Mutation(mutation))
    outs = _run(faulty, rounds, lr)
    first = outs[0].commit
    same = np.array_equal(clean.current_weights(), faulty.current_weights())
    ok = first.committed and first.reselections >= 1 and first.leader != leader and same and faulty.network.honest_views_agree()
    return ScenarioResult(
        "bad_packager", ok, f"faulty={leader} committed_by={first.leader} reselections={first.reselections} weights_equal={same}"
    )


def bad_voters(n_bad: int, cfg: Optional[ExperimentConfig] = None) -> ScenarioResult:
    cfg = cfg or scenario_config()
    session = _session(cfg)
    ids = list(session.network.nodes)
    for nid in ids[:n_bad]:
        session.inject_fault(nid, Behavior.BAD_VOTER)
    height0 = session.network.height
    snap0 = session.contract.snapshot_json()
    out = run_swarm_round(session, 1, cfg.local.learning_rate)
    n = len(ids)
    need = session.net_config.votes_needed
    expect_commit = n - n_bad >= need
    if expect_commit:
        ok = out.status == CommitStatus.COMMITTED and session.network.honest_views_agree() and out.aggregated
    else:
        ok = (
            out.status == CommitStatus.STALLED
            and session.network.height == height0
            and all(node.contract.snapshot_json() == snap0 for node in session.network.nodes.values())
        )
    return ScenarioResult(f"{n_bad}_of_{n}_bad_voters", ok, f"status={out.status.value} need={need} of {n}")


def malicious_client(cfg: Optional[ExperimentConfig] = None, attack: str = "negate", threshold: float = 0.5) -> ScenarioResult:
    base = cfg or scenario_config()
    victim = "dev-0-0"
    cfg = base.replace(p=0.75, screen_threshold=threshold, malicious_clients={victim: attack})
    session = _session(cfg)
    out = run_swarm_round(session, 1, cfg.local.learning_rate)
    honest_ok = all(s >= threshold for d, s in out.similarity.items() if d != victim)
    ok = out.flagged == [victim] and honest_ok and out.aggregated
    return ScenarioResult(
        "malicious_client", ok, f"flagged={out.flagged} similarity={out.similarity[victim]:.4f} aggregated={out.aggregated}"
    )


def run_fault_matrix(cfg: Optional[ExperimentConfig] = None) -> list[ScenarioResult]:
    return [bad_packager(cfg), bad_voters(1, cfg), bad_voters(2, cfg), malicious_client(cfg)]
