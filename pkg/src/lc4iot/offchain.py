"""Simulated cloud storage with SHA-256 anchors on a private chain.

Raw payloads stay off chain. Every write appends an anchor block (address,
data hash, owner) to the private chain; on-chain transfer transactions carry
only the data hash and the object address sealed to the receiver's key.
"""
from __future__ import annotations

import base64
import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .clock import StepClock
from .crypto import KeyPair, cal_block_hash, seal, sha256, unseal
from .errors import AccessDenied, NoAnchor, NotMember
from .ledger import (
    Block,
    Chain,
    Transaction,
    Visibility,
    append_block,
    encode_metadata,
    find_sender,
    make_transaction,
    new_chain,
    request_digest,
)

MAX_ONCHAIN_METADATA = 1024


class Access(enum.Enum):
    PUBLIC = "public"
    RESTRICTED = "restricted"


@dataclass
class StoredObject:
    raw: bytes
    stored_hash: bytes
    access: Access
    version: int
    grants: set[bytes] = field(default_factory=set)


class AnchorLedger:
    """Owner of the private anchor chain; appends are serialized here."""

    def __init__(self, chain: Chain | None = None, clock=None):
        self.clock = clock or StepClock()
        self.chain = chain or new_chain(Visibility.PRIVATE, self.clock.now_ms())

    def anchor(self, owner: KeyPair, address: str, data_hash: bytes, version: int) -> Block:
        meta = {"anchor": address, "data_hash": data_hash.hex(),
                "owner": owner.public_key.hex(), "version": version}
        tx = make_transaction(owner, owner.public_key, meta)
        tip = self.chain.tip
        ts = max(self.clock.now_ms(), tip.ts)
        block = Block(tip.index + 1, tip.hash, ts, tx, cal_block_hash(tip.index + 1, tip.hash, ts, tx))
        self.chain = append_block(self.chain, block)
        return block


class CloudSpace:
    """One stakeholder's storage, keyed by the cloud public key (CPk)."""

    def __init__(self, owner: KeyPair, anchors: AnchorLedger | None = None):
        self.owner = owner
        self.anchors = anchors or AnchorLedger()
        self.objects: dict[str, StoredObject] = {}
        self._version = 0

    @property
    def owner_cpk(self) -> bytes:
        return self.owner.public_key


def object_address(owner_cpk: bytes, data: bytes, version: int) -> str:
    return sha256(owner_cpk + data + struct.pack(">Q", version)).hex()


def store_raw(space: CloudSpace, data: bytes, access: Access = Access.PUBLIC) -> str:
    version = space._version
    space._version += 1
    address = object_address(space.owner_cpk, data, version)
    digest = sha256(data)
    space.objects[address] = StoredObject(bytes(data), digest, access, version)
    space.anchors.anchor(space.owner, address, digest, version)
    return address


def grant(space: CloudSpace, address: str, reader_pk: bytes) -> None:
    space.objects[address].grants.add(reader_pk)


def retrieve(space: CloudSpace, address: str, reader: KeyPair | None = None) -> bytes:
    """Read ``address``; restricted objects need the owner's or a grantee's key pair."""
    obj = space.objects[address]
    if obj.access is Access.RESTRICTED:
        if reader is None or (reader.public_key != space.owner_cpk
                              and reader.public_key not in obj.grants):
            raise AccessDenied(address)
    return obj.raw


def find_anchor(private_chain: Chain, address: str) -> dict:
    for block in reversed(private_chain.blocks):
        meta = block.tx.meta
        if meta is not None and meta.get("anchor") == address:
            return meta
    raise NoAnchor(address)


def verify_integrity(space: CloudSpace, address: str, private_chain: Chain | None = None) -> bool:
    chain = private_chain if private_chain is not None else space.anchors.chain
    anchored = bytes.fromhex(find_anchor(chain, address)["data_hash"])
    obj = space.objects.get(address)
    return obj is not None and sha256(obj.raw) == anchored


# -- transfers ---------------------------------------------------------------

def transfer_metadata(space: CloudSpace, sender: KeyPair, receiver_pk: bytes, data: bytes,
                      access: Access = Access.RESTRICTED) -> tuple[dict, str]:
    """Store ``data`` and build the on-chain metadata for handing it to ``receiver_pk``."""
    address = store_raw(space, data, access)
    grant(space, address, receiver_pk)
    pointer = encode_metadata({"address": address, "cpk": space.owner_cpk.hex()})
    sealed = seal(receiver_pk, pointer, entropy=sender.private_key)
    meta = {
        "data_hash": sha256(data).hex(),
        "size": len(data),
        "receiver": receiver_pk.hex(),
        "sealed": base64.b64encode(sealed).decode(),
    }
    return meta, address


def transfer_offchain(sender: KeyPair, space: CloudSpace, receiver_pk: bytes, data: bytes,
                      chain: Chain, access: Access = Access.RESTRICTED,
                      attest: Callable[[bytes], bytes] | None = None) -> tuple[Transaction, str]:
    """Store ``data`` off chain and build the signed Store transaction for it.

    ``attest`` maps the transaction's attestation digest to an oracle
    multi-signature blob; without it the oracle field is left empty.
    """
    if find_sender(chain, sender.public_key) is None:
        raise NotMember(sender.public_key.hex())
    meta, address = transfer_metadata(space, sender, receiver_pk, data, access)
    raw = encode_metadata(meta)
    blob = attest(request_digest(sender.public_key, space.owner_cpk, raw)) if attest else b""
    return make_transaction(sender, space.owner_cpk, raw, blob), address


def open_grant(receiver: KeyPair, tx: Transaction) -> tuple[str, bytes]:
    """Recover ``(address, cloud key)`` from a transfer transaction."""
    sealed = base64.b64decode(tx.meta["sealed"])
    pointer = json.loads(unseal(receiver, sealed))
    return pointer["address"], bytes.fromhex(pointer["cpk"])


# -- on-disk layout ----------------------------------------------------------

INDEX_FILE = "index.jsonl"


def save_space(space: CloudSpace, directory: str | Path) -> None:
    """One file per object (named by address) plus an index of hash and access."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = []
    for address, obj in sorted(space.objects.items(), key=lambda kv: kv[1].version):
        (d / address).write_bytes(obj.raw)
        lines.append(json.dumps({
            "address": address, "hash": obj.stored_hash.hex(), "access": obj.access.value,
            "version": obj.version, "grants": sorted(g.hex() for g in obj.grants),
        }, sort_keys=True))
    (d / INDEX_FILE).write_text("".join(ln + "\n" for ln in lines))


def load_space(directory: str | Path, owner: KeyPair, anchors: AnchorLedger) -> CloudSpace:
    d = Path(directory)
    space = CloudSpace(owner, anchors)
    for ln in (d / INDEX_FILE).read_text().splitlines():
        e = json.loads(ln)
        space.objects[e["address"]] = StoredObject(
            (d / e["address"]).read_bytes(), bytes.fromhex(e["hash"]), Access(e["access"]),
            int(e["version"]), {bytes.fromhex(g) for g in e["grants"]},
        )
        space._version = max(space._version, int(e["version"]) + 1)
    return space
