"""Transactions, blocks and append-only chains.

Chains are immutable values: :func:`append_block` returns a new chain and the
old one stays valid. One transaction per block.

Transaction metadata is canonical JSON (sorted keys, no whitespace). Produce
custody is encoded with two metadata keys: ``produce`` (current produce public
key, hex) and ``link_prev`` (previous produce key, empty on registration).
"""
from __future__ import annotations

import base64
import enum
import json
import struct
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, Iterator

from .crypto import (
    ZERO_DIGEST,
    Digest,
    KeyPair,
    block_header,
    length_prefixed,
    sha256,
    verify,
)
from .errors import BlockIndexError, HashError, LinkageError, UnknownProduce

_TX_DOMAIN = b"lc4iot/tx"


class TxKind(enum.Enum):
    STORE = "store"
    GENESIS = "genesis"


class Visibility(enum.Enum):
    PUBLIC = "public"
    PRIVATE = "private"


def encode_metadata(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def decode_metadata(raw: bytes) -> dict | None:
    """Parse canonical metadata; ``None`` for empty or non-canonical bytes."""
    if not raw:
        return None
    try:
        obj = json.loads(raw)
    except (UnicodeDecodeError, json.JSONDecodeError):
        return None
    if not isinstance(obj, dict) or encode_metadata(obj) != raw:
        return None
    return obj


def request_digest(sender_pk: bytes, cloud_pk: bytes, metadata: bytes) -> Digest:
    """Digest of the signature-free part of a transaction; what oracles sign."""
    return sha256(length_prefixed(sender_pk, cloud_pk, metadata))


@dataclass(frozen=True)
class Transaction:
    sender_pk: bytes
    cloud_pk: bytes
    oracle_sig: bytes
    metadata: bytes
    sender_sig: bytes = b""

    def outputs(self, i: int) -> bytes:
        return (self.sender_pk, self.cloud_pk, self.oracle_sig)[i]

    def serialize(self) -> bytes:
        return length_prefixed(
            self.sender_pk, self.cloud_pk, self.oracle_sig,
            self.metadata, self.sender_sig,
        )

    def signing_payload(self) -> bytes:
        return _TX_DOMAIN + length_prefixed(
            self.sender_pk, self.cloud_pk, self.oracle_sig, self.metadata
        )

    @cached_property
    def tx_id(self) -> Digest:
        return sha256(self.serialize())

    @cached_property
    def meta(self) -> dict | None:
        return decode_metadata(self.metadata)

    @property
    def kind(self) -> TxKind:
        if not self.metadata:
            return TxKind.GENESIS
        meta = self.meta
        if meta is not None and "genesis" in meta:
            return TxKind.GENESIS
        return TxKind.STORE

    def sender_sig_valid(self) -> bool:
        return verify(self.sender_pk, self.signing_payload(), self.sender_sig)

    def signed(self, sender: KeyPair) -> Transaction:
        if sender.public_key != self.sender_pk:
            raise ValueError("signing key does not match sender_pk")
        unsigned = replace(self, sender_sig=b"")
        return replace(unsigned, sender_sig=sender.sign(unsigned.signing_payload()).value)


def attestation_digest(tx: Transaction) -> Digest:
    """The digest the oracle multi-signature of ``tx`` must cover.

    A rewritten genesis transaction keeps the oracle signatures of the request
    it replaced, so its digest is recomputed from that request: the requester
    key, the cloud key and the metadata minus the ``genesis`` envelope.
    """
    meta = tx.meta
    if meta is not None and "genesis" in meta:
        original = {k: v for k, v in meta.items() if k != "genesis"}
        requester = bytes.fromhex(meta["genesis"]["requester"])
        return request_digest(requester, tx.cloud_pk, encode_metadata(original))
    return request_digest(tx.sender_pk, tx.cloud_pk, tx.metadata)


def make_transaction(
    sender: KeyPair,
    cloud_pk: bytes,
    metadata: dict | bytes,
    oracle_sig: bytes = b"",
) -> Transaction:
    raw = encode_metadata(metadata) if isinstance(metadata, dict) else metadata
    tx = Transaction(sender.public_key, cloud_pk, oracle_sig, raw)
    return tx.signed(sender)


ROOT_TRANSACTION = Transaction(b"", b"", b"", b"", b"")


def block_digest(index: int, prev_hash: Digest, ts: int, tx: Transaction,
                 nonce: int | None = None) -> Digest:
    """Uncounted header hash; PoW blocks append an 8-byte BE nonce."""
    header = block_header(index, prev_hash, ts, tx)
    if nonce is not None:
        header += struct.pack(">Q", nonce)
    return sha256(header)


@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: Digest
    ts: int
    tx: Transaction
    hash: Digest
    nonce: int | None = None

    def recompute_hash(self) -> Digest:
        return block_digest(self.index, self.prev_hash, self.ts, self.tx, self.nonce)


@dataclass(frozen=True)
class Chain:
    blocks: tuple[Block, ...]
    visibility: Visibility = Visibility.PUBLIC

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self) -> Iterator[Block]:
        return iter(self.blocks)

    def __getitem__(self, i):
        return self.blocks[i]

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def append(self, block: Block) -> Chain:
        return append_block(self, block)


def new_chain(visibility: Visibility = Visibility.PUBLIC, genesis_ts: int = 0) -> Chain:
    root = Block(0, ZERO_DIGEST, genesis_ts, ROOT_TRANSACTION,
                 block_digest(0, ZERO_DIGEST, genesis_ts, ROOT_TRANSACTION))
    return Chain((root,), visibility)


def append_block(chain: Chain, block: Block) -> Chain:
    tip = chain.tip
    if block.prev_hash != tip.hash:
        raise LinkageError(f"block {block.index} does not link to tip {tip.index}")
    if block.index != tip.index + 1:
        raise BlockIndexError(f"expected index {tip.index + 1}, got {block.index}")
    if block.hash != block.recompute_hash():
        raise HashError(f"block {block.index} hash mismatch")
    if block.ts < tip.ts:
        raise LinkageError(f"block {block.index} timestamp precedes tip")
    return Chain(chain.blocks + (block,), chain.visibility)


def chain_problems(chain: Chain) -> list[str]:
    """Every violated chain/block invariant, as human-readable strings."""
    problems = []
    blocks = chain.blocks
    if not blocks:
        return ["chain is empty"]
    if blocks[0].index != 0:
        problems.append("first block index is not 0")
    if blocks[0].prev_hash != ZERO_DIGEST:
        problems.append("genesis prev_hash is not zero")
    for i, b in enumerate(blocks):
        if b.hash != b.recompute_hash():
            problems.append(f"block {i}: hash mismatch")
        if i == 0:
            continue
        prev = blocks[i - 1]
        if b.index != prev.index + 1:
            problems.append(f"block {i}: index {b.index} after {prev.index}")
        if b.prev_hash != prev.hash:
            problems.append(f"block {i}: prev_hash does not match block {i - 1}")
        if b.ts < prev.ts:
            problems.append(f"block {i}: timestamp decreases")
    return problems


def validate_chain(chain: Chain) -> bool:
    return not chain_problems(chain)


def find_sender(chain: Chain, pk: bytes) -> int | None:
    """Highest block index whose transaction was sent by ``pk``; ``None`` if absent."""
    for block in reversed(chain.blocks):
        if block.tx.sender_pk == pk:
            return block.index
    return None


# -- produce traceability ----------------------------------------------------

def _lineage(tx: Transaction) -> tuple[str, str] | None:
    meta = tx.meta
    if meta is None or "produce" not in meta:
        return None
    return meta["produce"], meta.get("link_prev", "")


def trace_produce(public_chain: Chain, produce_key: bytes | str) -> list[Transaction]:
    """Custody history of a produce, registration first.

    ``produce_key`` may be any key the produce has carried.
    """
    key = produce_key.hex() if isinstance(produce_key, bytes) else produce_key
    by_key: dict[str, Transaction] = {}
    by_prev: dict[str, Transaction] = {}
    for block in public_chain.blocks:
        lin = _lineage(block.tx)
        if lin is None:
            continue
        cur, prev = lin
        by_key.setdefault(cur, block.tx)
        if prev:
            by_prev.setdefault(prev, block.tx)
    if key not in by_key:
        raise UnknownProduce(key)

    seen = {key}
    tx = by_key[key]
    while True:
        prev = _lineage(tx)[1]
        if not prev or prev not in by_key or prev in seen:
            break
        seen.add(prev)
        tx = by_key[prev]

    out = [tx]
    cur = _lineage(tx)[0]
    seen = {cur}
    while cur in by_prev:
        tx = by_prev[cur]
        cur = _lineage(tx)[0]
        if cur in seen:
            break
        seen.add(cur)
        out.append(tx)
    return out


# -- export / import ---------------------------------------------------------

def _b64(b: bytes) -> str:
    return base64.b64encode(b).decode()


def block_to_dict(block: Block) -> dict:
    d = {
        "index": block.index,
        "prev_hash": block.prev_hash.hex(),
        "ts": block.ts,
        "tx": {
            "sender_pk": block.tx.sender_pk.hex(),
            "cloud_pk": block.tx.cloud_pk.hex(),
            "oracle_sig": _b64(block.tx.oracle_sig),
            "metadata": _b64(block.tx.metadata),
            "sender_sig": _b64(block.tx.sender_sig),
        },
        "hash": block.hash.hex(),
    }
    if block.nonce is not None:
        d["nonce"] = block.nonce
    return d


def block_from_dict(d: dict) -> Block:
    t = d["tx"]
    tx = Transaction(
        bytes.fromhex(t["sender_pk"]),
        bytes.fromhex(t["cloud_pk"]),
        base64.b64decode(t["oracle_sig"]),
        base64.b64decode(t["metadata"]),
        base64.b64decode(t["sender_sig"]),
    )
    return Block(int(d["index"]), bytes.fromhex(d["prev_hash"]), int(d["ts"]), tx,
                 bytes.fromhex(d["hash"]), d.get("nonce"))


def export_chain(chain: Chain) -> str:
    return "".join(
        json.dumps(block_to_dict(b), sort_keys=True, separators=(",", ":")) + "\n"
        for b in chain.blocks
    )


def import_chain(lines: str | Iterable[str],
                 visibility: Visibility = Visibility.PUBLIC) -> Chain:
    """Parse a JSON-lines export. Does not validate; call :func:`validate_chain`."""
    if isinstance(lines, str):
        lines = lines.splitlines()
    blocks = tuple(block_from_dict(json.loads(ln)) for ln in lines if ln.strip())
    return Chain(blocks, visibility)
