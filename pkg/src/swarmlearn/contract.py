"""The Swarm Learning smart contract.

A deterministic state machine: nodes apply committed messages to their own
``SwarmContract`` copy in block order, so every honest copy stays equal.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .chaincore import Func, SignedMessage
from .fixedpoint import DEFAULT_SCALE, RAW_SCALE, FixedPointVector, Overflow, dequantize, quantize

__all__ = [
    "ContractError",
    "BadConfig",
    "AlreadyRegistered",
    "Unauthorized",
    "BadPayload",
    "SamplingNotMet",
    "Overflow",
    "DeviceRecord",
    "SwarmContract",
    "Receipt",
    "init_contract",
    "screen_update",
    "quantize",
    "dequantize",
    "FixedPointVector",
]


class ContractError(Exception):
    pass


class BadConfig(ContractError):
    pass


class AlreadyRegistered(ContractError):
    pass


class Unauthorized(ContractError):
    pass


class BadPayload(ContractError):
    pass


class SamplingNotMet(ContractError):
    def __init__(self, fraction: float):
        super().__init__(f"only {fraction:.4f} of devices updated")
        self.fraction = fraction


@dataclass
class DeviceRecord:
    account: str
    data_count: int
    params: FixedPointVector
    updated: int = 0
    losses: Optional[tuple[float, float]] = None


@dataclass(frozen=True)
class Receipt:
    """Outcome of applying one committed message; ``error`` is the exception class name."""

    index: int
    owner: str
    func: str
    ok: bool
    error: str = ""
    fraction: Optional[float] = None


@dataclass
class SwarmContract:
    param_len: int
    scale: int
    p: float
    lam: float
    aggregated: FixedPointVector
    strict_paper_weights: bool = False
    devices: dict[str, DeviceRecord] = field(default_factory=dict)
    round: int = 0
    total_count: int = 0
    account_id: str = "swarm-contract"

    # -- client functions -------------------------------------------------

    def register_device(self, account: str, data_count: int) -> "SwarmContract":
        if account in self.devices:
            raise AlreadyRegistered(account)
        if int(data_count) < 1:
            raise BadConfig(f"data_count must be >= 1, got {data_count}")
        zeros = FixedPointVector((0,) * self.param_len, self.scale)
        self.devices[account] = DeviceRecord(account, int(data_count), zeros)
        self.total_count += int(data_count)
        return self

    def update_parameter(self, caller: str, params: FixedPointVector, losses=None) -> "SwarmContract":
        rec = self.devices.get(caller)
        if rec is None:
            raise Unauthorized(caller)
        if len(params) != self.param_len or params.scale != self.scale:
            raise BadPayload(f"expected {self.param_len} values at scale {self.scale}")
        rec.params = params
        rec.updated = 1
        rec.losses = None if losses is None else (float(losses[0]), float(losses[1]))
        return self

    def participation(self) -> float:
        if not self.devices:
            return 0.0
        return sum(r.updated for r in self.devices.values()) / len(self.devices)

    def aggregate_parameters(self, caller: str) -> "SwarmContract":
        if caller not in self.devices:
            raise Unauthorized(caller)
        frac = self.participation()
        if frac < self.p:
            raise SamplingNotMet(frac)
        part = [r for r in self.devices.values() if r.updated]
        denom = self.total_count if self.strict_paper_weights else sum(r.data_count for r in part)
        # accumulate in a fixed (sorted) order so upload order cannot matter
        acc = np.zeros(self.param_len)
        for r in sorted(part, key=lambda r: r.account):
            acc += (r.data_count / denom) * dequantize(r.params)
        self.aggregated = quantize(self.lam * acc, self.scale)
        for r in self.devices.values():
            r.updated = 0
        self.round += 1
        return self

    def query_aggregated(self) -> tuple[FixedPointVector, int]:
        return self.aggregated, self.round

    # -- message dispatch --------------------------------------------------

    def apply(self, msg: SignedMessage, index: int = 0, strict: bool = False) -> Receipt:
        """Execute one committed message.

        Registry and payload violations are always raised; a sampling-rate
        shortfall is a reverted call recorded in the receipt unless ``strict``.
        """
        if msg.receiver != self.account_id:
            raise Unauthorized(f"message addressed to {msg.receiver}")
        if msg.func == Func.UPLOAD:
            self.update_parameter(msg.owner, msg.payload, msg.losses)
            return Receipt(index, msg.owner, "Upload", True)
        try:
            self.aggregate_parameters(msg.owner)
        except SamplingNotMet as exc:
            if strict:
                raise
            return Receipt(index, msg.owner, "Aggregate", False, "SamplingNotMet", exc.fraction)
        return Receipt(index, msg.owner, "Aggregate", True)

    def apply_all(self, msgs) -> list[Receipt]:
        return [self.apply(m, i) for i, m in enumerate(msgs)]

    def copy(self) -> "SwarmContract":
        return copy.deepcopy(self)

    def snapshot(self) -> dict:
        return {
            "account": self.account_id,
            "param_len": self.param_len,
            "scale": self.scale,
            "p": self.p,
            "lambda": self.lam,
            "strict_paper_weights": self.strict_paper_weights,
            "round": self.round,
            "total_count": self.total_count,
            "aggregated": list(self.aggregated.values),
            "devices": [
                {
                    "account": r.account,
                    "data_count": r.data_count,
                    "updated": r.updated,
                    "losses": None if r.losses is None else list(r.losses),
                }
                for r in sorted(self.devices.values(), key=lambda r: r.account)
            ],
        }

    def snapshot_json(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True)


def init_contract(
    param_len: int,
    scale: int = DEFAULT_SCALE,
    p: float = 1.0,
    lam: float = 1.0,
    initial_params=None,
    strict_paper_weights: bool = False,
) -> SwarmContract:
    """Deploy the contract.  ``scale=0`` stores raw float bits (quantization off)."""
    if param_len < 1:
        raise BadConfig("param_len must be >= 1")
    if not 0.0 < p <= 1.0:
        raise BadConfig(f"sampling rate must lie in (0, 1], got {p}")
    if scale != RAW_SCALE and not (10**3 <= scale <= 10**9 and _is_power_of_ten(scale)):
        raise BadConfig(f"scale must be a power of ten in [1e3, 1e9], got {scale}")
    if initial_params is None:
        initial_params = np.zeros(param_len)
    initial = np.asarray(initial_params, dtype=np.float64).ravel()
    if initial.size != param_len:
        raise BadConfig(f"initial_params has {initial.size} values, expected {param_len}")
    return SwarmContract(
        param_len=param_len,
        scale=scale,
        p=float(p),
        lam=float(lam),
        aggregated=quantize(initial, scale),
        strict_paper_weights=strict_paper_weights,
    )


def _is_power_of_ten(n: int) -> bool:
    while n % 10 == 0 and n > 1:
        n //= 10
    return n == 1


def screen_update(state: SwarmContract, candidate: FixedPointVector) -> float:
    """Cosine similarity between a candidate upload and the current aggregate."""
    a = dequantize(candidate)
    b = dequantize(state.aggregated)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))
