"""Experiment configuration, desk-scale defaults and JSON round-tripping."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

LL, CL, SL = "LL", "CL", "SL"
SCHEMES = (LL, CL, SL)


@dataclass
class Topology:
    orgs: int = 3
    nodes_per_org: int = 2
    quorum: float = 2 / 3
    schedule_seed: int = 0


@dataclass
class Window:
    history: int = 7
    horizon: int = 1
    stride: int = 1
    aligned: bool = False


@dataclass
class Local:
    local_epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 0.1


@dataclass
class Stopping:
    e_max: int = 100
    e_pre: int = 10
    c_switchcriterion: int = 5
    c_tol: int = 2
    c_maxswitch: int = 4
    c_maxneswitch: int = 2


@dataclass
class ExperimentConfig:
    kind: str = "Gas"
    labels: list[str] = field(default_factory=list)
    n_external: int = 2
    folds: Optional[list[int]] = None
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    data_seed: int = 0
    series_length: Optional[int] = None
    features: list[str] = field(default_factory=list)
    split: list[float] = field(default_factory=lambda: [0.7, 0.2, 0.1])
    val_months: int = 2
    test_months: int = 2
    hidden_dim: int = 8
    bidirectional: bool = False
    output_activation: str = "identity"
    window: Window = field(default_factory=Window)
    local: Local = field(default_factory=Local)
    stopping: Stopping = field(default_factory=Stopping)
    topology: Topology = field(default_factory=Topology)
    p: float = 1.0
    lam: float = 1.0
    scale: int = 10**6
    strict_paper_weights: bool = False
    screen_threshold: Optional[float] = None
    malicious_clients: dict[str, str] = field(default_factory=dict)
    faults: dict[str, Any] = field(default_factory=dict)
    schemes: list[str] = field(default_factory=lambda: list(SCHEMES))
    # volume sweep
    volume_groups: int = 2
    # local-epoch sweep
    local_epoch_grid: list[int] = field(default_factory=lambda: [1, 2, 5, 10])
    local_epoch_fold: int = 1

    @property
    def n_folds(self) -> int:
        return len(self.labels) // self.n_external

    def fold_indices(self) -> list[int]:
        return list(self.folds) if self.folds is not None else list(range(self.n_folds))

    def external_labels(self, fold: int) -> list[str]:
        if not 0 <= fold < self.n_folds:
            raise ValueError(f"fold {fold} out of range (0..{self.n_folds - 1})")
        return self.labels[fold * self.n_external : (fold + 1) * self.n_external]

    def internal_labels(self, fold: int) -> list[str]:
        ext = set(self.external_labels(fold))
        return [lab for lab in self.labels if lab not in ext]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def replace(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig.from_dict({**self.to_dict(), **changes})

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        nested = {"window": Window, "local": Local, "stopping": Stopping, "topology": Topology}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kind = d.get("kind", "Gas")
        base = default_config(kind).to_dict()
        for key, value in d.items():
            if key in nested and isinstance(value, dict):
                sub_known = {f.name for f in dataclasses.fields(nested[key])}
                bad = set(value) - sub_known
                if bad:
                    raise ValueError(f"unknown {key} keys: {sorted(bad)}")
                base[key] = {**base[key], **value}
            else:
                base[key] = value
        kwargs = {k: (nested[k](**v) if k in nested else v) for k, v in base.items()}
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        doc = json.loads(Path(path).read_text())
        # a run manifest embeds the config under "config"
        if "config" in doc and isinstance(doc["config"], dict):
            doc = doc["config"]
        return cls.from_dict(doc)


def default_config(kind: str) -> ExperimentConfig:
    """Desk-scale defaults: eight datasets per kind, two held out per fold."""
    if kind == "Gas":
        return ExperimentConfig(
            kind="Gas",
            labels=[f"W{i}" for i in range(1, 9)],
            series_length=360,
            features=["E_gas", "dE_gas", "casing_pressure", "tubing_pressure"],
            window=Window(history=7, horizon=1, stride=1),
            local=Local(local_epochs=1, batch_size=32, learning_rate=0.1),
        )
    if kind == "PV":
        return ExperimentConfig(
            kind="PV",
            labels=[f"P{i}" for i in range(1, 9)],
            series_length=None,
            features=["load", "ssrd", "tcc", "t2m"],
            window=Window(history=48, horizon=12, stride=12),
            output_activation="swish",
            local=Local(local_epochs=1, batch_size=32, learning_rate=0.1),
        )
    if kind == "WellLog":
        return ExperimentConfig(
            kind="WellLog",
            labels=[f"A{i}" for i in range(1, 9)],
            series_length=600,
            features=["GR", "AT30", "RHOZ"],
            window=Window(history=16, horizon=1, stride=4, aligned=True),
            bidirectional=True,
            local=Local(local_epochs=1, batch_size=32, learning_rate=0.05),
        )
    raise ValueError(f"unknown kind {kind!r}")


KIND_ALIASES = {"gas": "Gas", "pv": "PV", "welllog": "WellLog", "well-log": "WellLog", "well_log": "WellLog"}


def normalize_kind(kind: str) -> str:
    k = KIND_ALIASES.get(kind.lower(), kind)
    if k not in ("Gas", "PV", "WellLog"):
        raise ValueError(f"unknown kind {kind!r}")
    return k
