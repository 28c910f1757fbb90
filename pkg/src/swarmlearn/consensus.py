"""Simulated consortium network: leader rotation, quorum vote, commit, fault injection.

Every node keeps its own chain and contract copy.  A round is synchronous:
the scheduled leader proposes a block over the shared pending messages,
every online node validates it independently and casts a signed vote, and
nodes that accepted the block append it once the quorum is reached.  A
rejected proposal hands the turn to the next node in the schedule.
"""

from __future__ import annotations

import csv
import enum
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .chaincore import (
    Account,
    Block,
    Chain,
    Func,
    SignedMessage,
    assemble_block,
    digest,
    sign_message,
    verify_block,
    verify_signature,
)
from .contract import ContractError, Receipt, SwarmContract


class Behavior(enum.Enum):
    HONEST = "Honest"
    SILENT = "Silent"
    BAD_PACKAGER = "BadPackager"
    BAD_VOTER = "BadVoter"


class Mutation(enum.Enum):
    FLIP_PAYLOAD = "flip_payload"
    DROP_MESSAGE = "drop_message"
    BAD_ROOT = "bad_root"
    FORK = "fork"
    FORGE_UPLOAD = "forge_upload"


class CommitStatus(enum.Enum):
    COMMITTED = "Committed"
    STALLED = "Stalled"


@dataclass(frozen=True)
class NetworkConfig:
    orgs: int = 2
    nodes_per_org: int = 2
    devices_per_org: int = 1
    quorum: float = 2 / 3
    schedule_seed: int = 0

    def __post_init__(self):
        if min(self.orgs, self.nodes_per_org, self.devices_per_org) < 1:
            raise ValueError("orgs, nodes_per_org and devices_per_org must be >= 1")
        if not 0.5 < self.quorum <= 1.0:
            raise ValueError(f"quorum fraction must lie in (1/2, 1], got {self.quorum}")

    @property
    def n_nodes(self) -> int:
        return self.orgs * self.nodes_per_org

    @property
    def votes_needed(self) -> int:
        # tolerance guards against 2/3 * n landing a hair above an integer
        return math.ceil(self.quorum * self.n_nodes - 1e-9)

    def node_ids(self) -> list[str]:
        return [f"node-{o}-{s}" for o in range(self.orgs) for s in range(self.nodes_per_org)]

    def device_ids(self) -> list[str]:
        return [f"dev-{o}-{h}" for o in range(self.orgs) for h in range(self.devices_per_org)]

    def node_for_device(self, device_id: str) -> str:
        _, o, h = device_id.split("-")
        return f"node-{o}-{int(h) % self.nodes_per_org}"


def leader_schedule(config: NetworkConfig) -> list[str]:
    ids = config.node_ids()
    perm = np.random.default_rng(config.schedule_seed).permutation(len(ids))
    return [ids[i] for i in perm]


def select_packager(round: int, config: NetworkConfig) -> str:
    """Round-robin over the seeded node permutation."""
    schedule = leader_schedule(config)
    return schedule[round % len(schedule)]


def canonical_order(msgs: Sequence[SignedMessage]) -> list[SignedMessage]:
    """Uploads before aggregation calls, each group ordered by owner."""
    return sorted(msgs, key=lambda m: (int(m.func), m.owner, m.timestamp, m.signature))


@dataclass(frozen=True)
class Vote:
    node: str
    block_hash: bytes
    accept: bool
    signature: bytes

    def signed_bytes(self) -> bytes:
        return vote_bytes(self.node, self.block_hash, self.accept)


def vote_bytes(node: str, block_hash: bytes, accept: bool) -> bytes:
    raw = node.encode()
    return b"vote" + block_hash + struct.pack(">BH", int(accept), len(raw)) + raw


@dataclass
class Node:
    id: str
    org: int
    account: Account
    chain: Chain
    contract: SwarmContract
    behavior: Behavior = Behavior.HONEST
    mutation: Mutation = Mutation.FLIP_PAYLOAD

    @property
    def online(self) -> bool:
        return self.behavior != Behavior.SILENT

    def validate(self, block: Block, pending: Sequence[SignedMessage], keys: Mapping[str, bytes]) -> bool:
        """Ledger checks, mempool match, and a dry run of the contract calls."""
        if not verify_block(block, self.chain.tip, keys):
            return False
        if [m.encode() for m in block.messages] != [m.encode() for m in canonical_order(pending)]:
            return False
        trial = self.contract.copy()
        try:
            trial.apply_all(block.messages)
        except ContractError:
            return False
        return True

    def propose(self, pending: Sequence[SignedMessage], height: int, nonce: int) -> Block:
        msgs = canonical_order(pending)
        prev = self.chain.tip.block_hash
        if self.behavior != Behavior.BAD_PACKAGER:
            return assemble_block(prev, msgs, height, nonce, self.id)
        return self._faulty_block(msgs, prev, height, nonce)

    def _faulty_block(self, msgs: list[SignedMessage], prev: bytes, height: int, nonce: int) -> Block:
        mut = self.mutation
        if mut == Mutation.FLIP_PAYLOAD:
            i = next((k for k, m in enumerate(msgs) if m.func == Func.UPLOAD), 0)
            m = msgs[i]
            if m.payload is not None:
                msgs[i] = replace(m, payload=m.payload.with_value(0, m.payload.values[0] ^ 1))
            else:
                msgs[i] = replace(m, timestamp=m.timestamp + 1)
        elif mut == Mutation.DROP_MESSAGE:
            msgs = msgs[:-1] or msgs
        elif mut == Mutation.FORK:
            genesis = self.chain.blocks[0].block_hash
            prev = genesis if prev != genesis else digest(b"fork:" + prev)
        elif mut == Mutation.FORGE_UPLOAD:
            victim = next((m for m in msgs if m.func == Func.UPLOAD), msgs[0])
            forged = sign_message(
                self.account,
                prev_hash=victim.prev_hash,
                receiver=victim.receiver,
                func=victim.func,
                payload=victim.payload,
                losses=victim.losses,
                timestamp=victim.timestamp,
            )
            msgs[msgs.index(victim)] = replace(forged, owner=victim.owner)
        block = assemble_block(prev, msgs, height, nonce, self.id)
        if mut == Mutation.BAD_ROOT:
            block = replace(block, tx_root=digest(b"bad-root:" + block.tx_root))
            block = replace(block, block_hash=digest(block.header_bytes()))
        return block

    def vote(self, block: Block, pending, keys) -> Vote:
        ok = self.validate(block, pending, keys)
        if self.behavior == Behavior.BAD_VOTER:
            ok = not ok
        return Vote(self.id, block.block_hash, ok, self.account.sign(vote_bytes(self.id, block.block_hash, ok)))

    def commit(self, block: Block, keys) -> Optional[list[Receipt]]:
        """Append and execute a quorum block; a node never appends what it cannot verify."""
        if not verify_block(block, self.chain.tip, keys):
            return None
        trial = self.contract.copy()
        try:
            receipts = trial.apply_all(block.messages)
        except ContractError:
            return None
        self.chain.append(block, keys)
        self.contract = trial
        return receipts


@dataclass
class CommitResult:
    status: CommitStatus
    block: Optional[Block] = None
    reselections: int = 0
    receipts: list[Receipt] = field(default_factory=list)
    leader: Optional[str] = None

    @property
    def committed(self) -> bool:
        return self.status == CommitStatus.COMMITTED


@dataclass(frozen=True)
class CommitLogRow:
    round: int
    attempt: int
    leader: str
    votes_for: int
    votes_against: int
    result: str


class Network:
    """All nodes of the consortium plus the shared key registry."""

    def __init__(self, config: NetworkConfig, contract: SwarmContract, key_seed: int | str = 0):
        self.config = config
        self.keys: dict[str, bytes] = {}
        self.nodes: dict[str, Node] = {}
        genesis = Chain()
        for nid in config.node_ids():
            acct = Account.generate(nid, key_seed)
            self.keys[nid] = acct.verify_key
            org = int(nid.split("-")[1])
            self.nodes[nid] = Node(nid, org, acct, genesis.copy(), contract.copy())
        self.schedule = leader_schedule(config)
        self.commit_log: list[CommitLogRow] = []
        self.nonce = 0

    def register_account(self, account: Account) -> None:
        self.keys[account.id] = account.verify_key

    def inject_fault(self, node_id: str, behavior: Behavior, mutation: Mutation | None = None) -> None:
        node = self.nodes[node_id]
        node.behavior = Behavior(behavior)
        if mutation is not None:
            node.mutation = Mutation(mutation)

    def honest_nodes(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.behavior == Behavior.HONEST]

    def reference_node(self) -> Node:
        honest = self.honest_nodes()
        return honest[0] if honest else next(iter(self.nodes.values()))

    @property
    def height(self) -> int:
        return len(self.reference_node().chain)

    @property
    def tip_hash(self) -> bytes:
        return self.reference_node().chain.tip.block_hash

    def contract_view(self) -> SwarmContract:
        return self.reference_node().contract

    def select_packager(self, round: int) -> str:
        return self.schedule[round % len(self.schedule)]

    def propose_and_commit(self, pending: Sequence[SignedMessage]) -> CommitResult:
        height = self.height
        n = self.config.n_nodes
        for attempt in range(n):
            leader = self.nodes[self.select_packager(height + attempt)]
            if not leader.online:
                self.commit_log.append(CommitLogRow(height, attempt, leader.id, 0, 0, "silent"))
                continue
            self.nonce += 1
            block = leader.propose(pending, height, self.nonce)
            votes = [node.vote(block, pending, self.keys) for node in self.nodes.values() if node.online]
            valid = [v for v in votes if self._vote_ok(v, block)]
            votes_for = sum(v.accept for v in valid)
            votes_against = len(valid) - votes_for
            if votes_for < self.config.votes_needed:
                self.commit_log.append(CommitLogRow(height, attempt, leader.id, votes_for, votes_against, "rejected"))
                continue
            accepted = {v.node for v in valid if v.accept}
            receipts = None
            for node in self.nodes.values():
                if node.behavior == Behavior.HONEST and node.id not in accepted:
                    continue
                r = node.commit(block, self.keys)
                if node is self.reference_node():
                    receipts = r
            self.commit_log.append(CommitLogRow(height, attempt, leader.id, votes_for, votes_against, "committed"))
            return CommitResult(CommitStatus.COMMITTED, block, attempt, receipts or [], leader.id)
        self.commit_log.append(CommitLogRow(height, n, "-", 0, 0, "stalled"))
        return CommitResult(CommitStatus.STALLED, reselections=n - 1)

    def _vote_ok(self, vote: Vote, block: Block) -> bool:
        key = self.keys.get(vote.node)
        return (
            key is not None
            and vote.block_hash == block.block_hash
            and verify_signature(vote.signed_bytes(), vote.signature, key)
        )

    def honest_views_agree(self) -> bool:
        honest = self.honest_nodes()
        if not honest:
            return True
        chain0 = honest[0].chain.encode()
        snap0 = honest[0].contract.snapshot_json()
        return all(n.chain.encode() == chain0 and n.contract.snapshot_json() == snap0 for n in honest[1:])

    def write_commit_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "attempt", "leader", "votes_for", "votes_against", "result"])
            for row in self.commit_log:
                w.writerow([row.round, row.attempt, row.leader, row.votes_for, row.votes_against, row.result])


def parse_scenario(doc: Mapping) -> dict[int, list[tuple[str, Behavior, Optional[Mutation]]]]:
    """Per-round fault injections from a scenario document.

    ``{"rounds": [{"round": 1, "faults": [{"node": "node-0-0",
    "behavior": "BadPackager", "mutation": "flip_payload"}]}]}``
    """
    plan: dict[int, list] = {}
    for entry in doc.get("rounds", []):
        r = int(entry["round"])
        for f in entry.get("faults", []):
            mut = f.get("mutation")
            plan.setdefault(r, []).append((f["node"], Behavior(f["behavior"]), Mutation(mut) if mut else None))
    return plan
