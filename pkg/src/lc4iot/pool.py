"""Three-step transaction verification and the verified transaction pool."""
from __future__ import annotations

import enum
import random
import struct
from collections import Counter
from dataclasses import dataclass, replace

from .crypto import sha256
from .errors import BadCertificate, BadOracleSig, BadSenderSig, Duplicate, EmptyPool
from .ledger import Chain, Transaction, TxKind, find_sender
from .membership import MemberRegistry, verify_genesis_certificate
from .oracles import OracleRegistry, verify_multisig


class Verdict(enum.Enum):
    VERIFIED = "verified"
    GENESIS_CANDIDATE = "genesis-candidate"


def verify_transaction(tx: Transaction, chain: Chain, oracles: OracleRegistry,
                       members: MemberRegistry, *, pool: VerifiedPool | None = None,
                       counter: Counter | None = None) -> Verdict:
    """Check sender signature, sender key history, then oracle signatures.

    Steps run strictly in that order and stop at the first failure. A sender
    with no prior transaction yields ``GENESIS_CANDIDATE``; a rewritten genesis
    transaction is ``VERIFIED`` when its quorum certificate checks out.
    ``counter`` (if given) counts each step as it runs.
    """
    if counter is None:
        counter = Counter()
    if pool is not None and tx.tx_id in pool:
        raise Duplicate(tx.tx_id.hex())

    counter["sender_sig"] += 1
    if not tx.sender_sig_valid():
        raise BadSenderSig(tx.sender_pk.hex())

    counter["sender_lookup"] += 1
    known = find_sender(chain, tx.sender_pk) is not None
    if tx.kind is TxKind.GENESIS:
        if known:
            raise Duplicate(f"allocated key {tx.sender_pk.hex()} already on chain")
        if not verify_genesis_certificate(tx, members):
            raise BadCertificate(tx.sender_pk.hex())
        verdict = Verdict.VERIFIED
    else:
        verdict = Verdict.VERIFIED if known else Verdict.GENESIS_CANDIDATE

    counter["oracle_sig"] += 1
    if not verify_multisig(oracles, tx):
        raise BadOracleSig(tx.sender_pk.hex())
    return verdict


@dataclass(frozen=True)
class VerifiedPool:
    """Immutable pool value; draws are reproducible from the seed and history."""

    rng_seed: int = 0
    entries: tuple[Transaction, ...] = ()
    draws: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, tx_id: bytes) -> bool:
        return any(t.tx_id == tx_id for t in self.entries)

    def __iter__(self):
        return iter(self.entries)

    def ids(self) -> set[bytes]:
        return {t.tx_id for t in self.entries}


def pool_submit(pool: VerifiedPool, tx: Transaction) -> VerifiedPool:
    if tx.tx_id in pool:
        raise Duplicate(tx.tx_id.hex())
    return replace(pool, entries=pool.entries + (tx,))


def _draw_index(seed: int, draw: int, n: int) -> int:
    material = sha256(struct.pack(">QQ", seed % 2**64, draw))
    return random.Random(int.from_bytes(material, "big")).randrange(n)


def pool_fetch_random(pool: VerifiedPool) -> tuple[Transaction, VerifiedPool]:
    if not pool.entries:
        raise EmptyPool()
    i = _draw_index(pool.rng_seed, pool.draws, len(pool.entries))
    rest = pool.entries[:i] + pool.entries[i + 1:]
    return pool.entries[i], replace(pool, entries=rest, draws=pool.draws + 1)


def submit(pool: VerifiedPool, tx: Transaction, chain: Chain, oracles: OracleRegistry,
           members: MemberRegistry) -> tuple[VerifiedPool, Verdict]:
    """Verify ``tx`` and pool it. Genesis candidates are pooled too; the
    block-appending step routes them to the membership vote."""
    verdict = verify_transaction(tx, chain, oracles, members, pool=pool)
    return pool_submit(pool, tx), verdict
