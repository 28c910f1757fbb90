"""Hash-chained ledger primitives: digests, signed messages, Merkle trees, blocks.

Byte layouts (all integers big-endian)::

    str      := u16 length ‖ utf-8 bytes
    payload  := u8 present ‖ [i64 scale ‖ u32 n ‖ n × i64 value]
    losses   := u8 present ‖ [f64 train ‖ f64 val]
    message  := prev_hash[32] ‖ str owner ‖ str receiver ‖ u8 func
                ‖ payload ‖ losses ‖ u64 timestamp            (signed part)
                ‖ u16 siglen ‖ signature
    header   := prev_hash[32] ‖ tx_root[32] ‖ u64 timestamp ‖ u64 nonce
                ‖ str packager
    block    := header ‖ u32 count ‖ count × (u32 len ‖ message) ‖ block_hash[32]

Digests are SHA-256.  Signatures are Ed25519 over the signed part of a
message; the "encryption" of messages with the device key is read as
authentication only.
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .fixedpoint import FixedPointVector

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)
# sha256(b"")
EMPTY_DIGEST_HEX = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"

Digest = bytes


class ChainError(Exception):
    pass


class EmptyTree(ChainError):
    pass


class EmptyBlock(ChainError):
    pass


class InvalidMessage(ChainError):
    def __init__(self, index: int):
        super().__init__(f"message {index} failed verification")
        self.index = index


class RejectedBlock(ChainError):
    pass


class DecodeError(ChainError):
    pass


def digest(data: bytes) -> Digest:
    return hashlib.sha256(data).digest()


# ---------------------------------------------------------------------------
# Accounts and signatures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Account:
    id: str
    signing_key: bytes = field(repr=False)
    verify_key: bytes

    @classmethod
    def generate(cls, account_id: str, seed: int | str = 0) -> "Account":
        """Deterministic key pair derived from ``(seed, account_id)``."""
        secret = digest(f"swarmlearn-account:{seed}:{account_id}".encode())
        public = Ed25519PrivateKey.from_private_bytes(secret).public_key()
        return cls(account_id, secret, public.public_bytes(Encoding.Raw, PublicFormat.Raw))

    def sign(self, data: bytes) -> bytes:
        return Ed25519PrivateKey.from_private_bytes(self.signing_key).sign(data)


def verify_signature(data: bytes, signature: bytes, verify_key: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(verify_key).verify(signature, data)
    except (InvalidSignature, ValueError):
        return False
    return True


# ---------------------------------------------------------------------------
# Messages
# ---------------------------------------------------------------------------


class Func(enum.IntEnum):
    UPLOAD = 1
    AGGREGATE = 2


@dataclass(frozen=True)
class SignedMessage:
    prev_hash: Digest
    owner: str
    receiver: str
    func: Func
    payload: Optional[FixedPointVector]
    losses: Optional[tuple[float, float]]
    timestamp: int
    signature: bytes = b""

    def signed_bytes(self) -> bytes:
        return _encode_unsigned(self)

    def encode(self) -> bytes:
        return self.signed_bytes() + _pack_bytes16(self.signature)

    def verify(self, verify_key: bytes) -> bool:
        if not _well_formed(self):
            return False
        return verify_signature(self.signed_bytes(), self.signature, verify_key)


def _well_formed(m: SignedMessage) -> bool:
    if len(m.prev_hash) != DIGEST_SIZE:
        return False
    if m.func == Func.UPLOAD:
        return m.payload is not None and len(m.payload) > 0
    return m.payload is None and m.losses is None


def sign_message(
    account: Account,
    *,
    prev_hash: Digest,
    receiver: str,
    func: Func,
    payload: Optional[FixedPointVector] = None,
    losses: Optional[tuple[float, float]] = None,
    timestamp: int = 0,
) -> SignedMessage:
    if losses is not None:
        losses = (float(losses[0]), float(losses[1]))
    unsigned = SignedMessage(prev_hash, account.id, receiver, Func(func), payload, losses, int(timestamp))
    return replace(unsigned, signature=account.sign(unsigned.signed_bytes()))


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack(">H", len(raw)) + raw


def _pack_bytes16(b: bytes) -> bytes:
    return struct.pack(">H", len(b)) + b


def _encode_unsigned(m: SignedMessage) -> bytes:
    parts = [bytes(m.prev_hash), _pack_str(m.owner), _pack_str(m.receiver), struct.pack(">B", int(m.func))]
    if m.payload is None:
        parts.append(b"\x00")
    else:
        n = len(m.payload.values)
        parts.append(struct.pack(f">BqI{n}q", 1, m.payload.scale, n, *m.payload.values))
    if m.losses is None:
        parts.append(b"\x00")
    else:
        parts.append(struct.pack(">Bdd", 1, *m.losses))
    parts.append(struct.pack(">Q", m.timestamp))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated input")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack(">H")
        return self.take(n).decode("utf-8")

    def bytes16(self) -> bytes:
        (n,) = self.unpack(">H")
        return self.take(n)

    def done(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError("trailing bytes")


def _read_message(r: _Reader) -> SignedMessage:
    prev = r.take(DIGEST_SIZE)
    owner = r.string()
    receiver = r.string()
    (func,) = r.unpack(">B")
    try:
        func = Func(func)
    except ValueError as exc:
        raise DecodeError(f"unknown func {func}") from exc
    payload = None
    (has_payload,) = r.unpack(">B")
    if has_payload:
        scale, n = r.unpack(">qI")
        payload = FixedPointVector(tuple(r.unpack(f">{n}q")), scale)
    losses = None
    (has_losses,) = r.unpack(">B")
    if has_losses:
        losses = tuple(r.unpack(">dd"))
    (ts,) = r.unpack(">Q")
    sig = r.bytes16()
    return SignedMessage(prev, owner, receiver, func, payload, losses, ts, sig)


def decode_message(data: bytes) -> SignedMessage:
    r = _Reader(data)
    m = _read_message(r)
    r.done()
    return m


# ---------------------------------------------------------------------------
# Merkle tree
# ---------------------------------------------------------------------------


def _next_level(level: list[Digest]) -> list[Digest]:
    if len(level) % 2:
        level = level + [level[-1]]
    return [digest(level[i] + level[i + 1]) for i in range(0, len(level), 2)]


def merkle_root(leaves: Sequence[bytes]) -> Digest:
    """Root over leaf digests; an odd level duplicates its last node."""
    if not leaves:
        raise EmptyTree("merkle tree needs at least one leaf")
    level = [digest(leaf) for leaf in leaves]
    while len(level) > 1:
        level = _next_level(level)
    return level[0]


def merkle_proof(leaves: Sequence[bytes], index: int) -> list[tuple[Digest, bool]]:
    """Sibling path for ``leaves[index]``; the flag is True when the sibling is on the left."""
    if not leaves:
        raise EmptyTree("merkle tree needs at least one leaf")
    if not 0 <= index < len(leaves):
        raise IndexError(index)
    level = [digest(leaf) for leaf in leaves]
    path = []
    while len(level) > 1:
        padded = level + [level[-1]] if len(level) % 2 else level
        sibling = index ^ 1
        path.append((padded[sibling], sibling < index))
        level = _next_level(level)
        index //= 2
    return path


def verify_proof(leaf: bytes, proof: Iterable[tuple[Digest, bool]], root: Digest) -> bool:
    node = digest(leaf)
    for sibling, left in proof:
        node = digest(sibling + node) if left else digest(node + sibling)
    return node == root


# ---------------------------------------------------------------------------
# Blocks and chains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    prev_hash: Digest
    tx_root: Digest
    messages: tuple[SignedMessage, ...]
    timestamp: int
    nonce: int
    packager: str
    block_hash: Digest

    def header_bytes(self) -> bytes:
        return _header_bytes(self.prev_hash, self.tx_root, self.timestamp, self.nonce, self.packager)

    def encode(self) -> bytes:
        parts = [self.header_bytes(), struct.pack(">I", len(self.messages))]
        for m in self.messages:
            raw = m.encode()
            parts.append(struct.pack(">I", len(raw)) + raw)
        parts.append(bytes(self.block_hash))
        return b"".join(parts)

    @property
    def is_genesis(self) -> bool:
        return self.prev_hash == ZERO_DIGEST and not self.messages and self.timestamp == 0


def _header_bytes(prev_hash: Digest, tx_root: Digest, timestamp: int, nonce: int, packager: str) -> bytes:
    return bytes(prev_hash) + bytes(tx_root) + struct.pack(">QQ", timestamp, nonce) + _pack_str(packager)


def decode_block(data: bytes) -> Block:
    r = _Reader(data)
    prev = r.take(DIGEST_SIZE)
    root = r.take(DIGEST_SIZE)
    ts, nonce = r.unpack(">QQ")
    packager = r.string()
    (count,) = r.unpack(">I")
    msgs = []
    for _ in range(count):
        (n,) = r.unpack(">I")
        msgs.append(decode_message(r.take(n)))
    block_hash = r.take(DIGEST_SIZE)
    r.done()
    return Block(prev, root, tuple(msgs), ts, nonce, packager, block_hash)


def genesis_block(packager: str = "genesis") -> Block:
    header = _header_bytes(ZERO_DIGEST, ZERO_DIGEST, 0, 0, packager)
    return Block(ZERO_DIGEST, ZERO_DIGEST, (), 0, 0, packager, digest(header))


def tx_root_of(messages: Sequence[SignedMessage]) -> Digest:
    return merkle_root([m.encode() for m in messages])


def _message_ok(m: SignedMessage, keys: Mapping[str, bytes]) -> bool:
    key = keys.get(m.owner)
    return key is not None and m.verify(key)


def build_block(
    prev: Digest,
    msgs: Sequence[SignedMessage],
    timestamp: int,
    nonce: int,
    packager: str,
    keys: Mapping[str, bytes],
) -> Block:
    if not msgs:
        raise EmptyBlock("only the genesis block may be empty")
    for i, m in enumerate(msgs):
        if not _message_ok(m, keys):
            raise InvalidMessage(i)
    return assemble_block(prev, msgs, timestamp, nonce, packager)


def assemble_block(
    prev: Digest, msgs: Sequence[SignedMessage], timestamp: int, nonce: int, packager: str
) -> Block:
    """Compute root and hash without checking signatures (used by faulty packagers too)."""
    root = tx_root_of(msgs)
    header = _header_bytes(prev, root, timestamp, nonce, packager)
    return Block(prev, root, tuple(msgs), timestamp, nonce, packager, digest(header))


def verify_block(b: Block, prev: Block, keys: Mapping[str, bytes]) -> bool:
    """Hash link, Merkle root, header hash and every message signature."""
    if b.prev_hash != prev.block_hash or b.timestamp <= prev.timestamp:
        return False
    if not b.messages:
        return False
    if digest(b.header_bytes()) != b.block_hash:
        return False
    if tx_root_of(b.messages) != b.tx_root:
        return False
    return all(m.prev_hash == b.prev_hash and _message_ok(m, keys) for m in b.messages)


def verify_genesis(b: Block) -> bool:
    return (
        b.is_genesis
        and b.tx_root == ZERO_DIGEST
        and b.nonce == 0
        and digest(b.header_bytes()) == b.block_hash
    )


class Chain:
    """Ordered block list starting at a genesis block."""

    def __init__(self, blocks: Optional[Sequence[Block]] = None):
        self.blocks: list[Block] = list(blocks) if blocks else [genesis_block()]

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def append(self, b: Block, keys: Mapping[str, bytes]) -> "Chain":
        if not verify_block(b, self.tip, keys):
            raise RejectedBlock(f"block {b.block_hash.hex()[:16]} does not extend the tip")
        self.blocks.append(b)
        return self

    def copy(self) -> "Chain":
        return Chain(self.blocks)

    def validate(self, keys: Mapping[str, bytes]) -> bool:
        if not self.blocks or not verify_genesis(self.blocks[0]):
            return False
        return all(verify_block(b, p, keys) for p, b in zip(self.blocks, self.blocks[1:]))

    def encode(self) -> bytes:
        return b"".join(struct.pack(">I", len(raw)) + raw for raw in (b.encode() for b in self.blocks))

    def __eq__(self, other) -> bool:
        return isinstance(other, Chain) and self.blocks == other.blocks

    # JSONL dump -----------------------------------------------------------

    def to_jsonl(self) -> str:
        return "".join(json.dumps(block_to_json(b), sort_keys=True) + "\n" for b in self.blocks)

    @classmethod
    def from_jsonl(cls, text: str) -> "Chain":
        blocks = [block_from_json(json.loads(line)) for line in text.splitlines() if line.strip()]
        if not blocks:
            raise DecodeError("empty chain dump")
        return cls(blocks)


def append_block(chain: Chain, b: Block, keys: Mapping[str, bytes]) -> Chain:
    return chain.append(b, keys)


def message_to_json(m: SignedMessage) -> dict:
    return {
        "prev_hash": m.prev_hash.hex(),
        "owner": m.owner,
        "receiver": m.receiver,
        "func": m.func.name.capitalize(),
        "payload": None if m.payload is None else {"scale": m.payload.scale, "values": list(m.payload.values)},
        "losses": None if m.losses is None else list(m.losses),
        "timestamp": m.timestamp,
        "signature": m.signature.hex(),
    }


def message_from_json(d: dict) -> SignedMessage:
    payload = d["payload"]
    if payload is not None:
        payload = FixedPointVector(tuple(int(v) for v in payload["values"]), int(payload["scale"]))
    losses = d["losses"]
    if losses is not None:
        losses = (float(losses[0]), float(losses[1]))
    return SignedMessage(
        bytes.fromhex(d["prev_hash"]),
        d["owner"],
        d["receiver"],
        Func[d["func"].upper()],
        payload,
        losses,
        int(d["timestamp"]),
        bytes.fromhex(d["signature"]),
    )


def block_to_json(b: Block) -> dict:
    return {
        "prev_hash": b.prev_hash.hex(),
        "tx_root": b.tx_root.hex(),
        "messages": [message_to_json(m) for m in b.messages],
        "timestamp": b.timestamp,
        "nonce": b.nonce,
        "packager": b.packager,
        "block_hash": b.block_hash.hex(),
    }


def block_from_json(d: dict) -> Block:
    try:
        return Block(
            bytes.fromhex(d["prev_hash"]),
            bytes.fromhex(d["tx_root"]),
            tuple(message_from_json(m) for m in d["messages"]),
            int(d["timestamp"]),
            int(d["nonce"]),
            d["packager"],
            bytes.fromhex(d["block_hash"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DecodeError(f"malformed block record: {exc}") from exc
