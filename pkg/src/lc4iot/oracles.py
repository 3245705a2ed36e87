"""Oracle attestation of sensor readings and the M-of-N multi-signature.

Each oracle compares a sensor reading ``x`` with a reference value ``y`` it
fetches itself and returns a 0/1 verdict. A transaction is oracle-valid when
at least ``threshold`` of the ``active_count`` queried oracles approve.

The multi-signature blob stored in ``Transaction.oracle_sig`` is the sorted
concatenation of ``(4-byte BE oracle id, 64-byte Ed25519 signature)`` entries,
each signing the transaction's attestation digest with verdict 1.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping

from .crypto import SIGNATURE_SIZE, Digest, KeyPair, Signature, keypair_generate, verify
from .errors import BadSignature, ConfigError, FetchError, ThresholdNotMet, UnknownOracle
from .ledger import Transaction, attestation_digest

_ATTEST_DOMAIN = b"lc4iot/attest"
ENTRY_SIZE = 4 + SIGNATURE_SIZE
WILDCARD = "*"


def attestation_message(tx_digest: Digest, verdict: int) -> bytes:
    return _ATTEST_DOMAIN + tx_digest + bytes([verdict])


class _Divergent:
    """Reference value that never matches any reading."""

    def __repr__(self):
        return "<divergent>"


DIVERGENT = _Divergent()


def table_source(table: Mapping[str, Any]) -> Callable[[str], Any]:
    """Fetch source backed by a query table; ``"*"`` is the fallback entry."""
    def fetch(query):
        if query in table:
            return table[query]
        if WILDCARD in table:
            return table[WILDCARD]
        raise FetchError(f"no reference value for {query!r}")
    return fetch


def always_divergent(query) -> Any:
    return DIVERGENT


@dataclass(frozen=True)
class Oracle:
    id: int
    keypair: KeyPair
    fetch_source: Callable[[Any], Any] = field(compare=False)

    @property
    def public_key(self) -> bytes:
        return self.keypair.public_key


def readings_agree(x, y, tolerance: float = 0.0) -> bool:
    numeric = (int, float)
    if (isinstance(x, numeric) and isinstance(y, numeric)
            and not isinstance(x, bool) and not isinstance(y, bool)):
        return abs(x - y) <= tolerance
    return x == y


def oracle_evaluate(oracle: Oracle, x, query, tolerance: float = 0.0,
                    *, strict: bool = False) -> int:
    """1 if reading ``x`` agrees with the oracle's own reference for ``query``.

    A missing reference value yields 0; with ``strict=True`` the
    :class:`FetchError` propagates instead.
    """
    try:
        y = oracle.fetch_source(query)
    except FetchError:
        if strict:
            raise
        return 0
    return int(readings_agree(x, y, tolerance))


@dataclass(frozen=True)
class OracleRegistry:
    oracles: tuple[Oracle, ...]
    active_count: int
    threshold: int
    sig_len: int = 8 * SIGNATURE_SIZE
    tolerance: float = 0.0
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "oracles", tuple(self.oracles))
        n = len(self.oracles)
        if not 1 <= self.threshold <= self.active_count <= n:
            raise ConfigError(
                f"need 1 <= threshold <= active <= N, got "
                f"{self.threshold}, {self.active_count}, {n}"
            )
        ids = [o.id for o in self.oracles]
        if len(set(ids)) != n:
            raise ConfigError("oracle ids must be unique")
        if len({o.public_key for o in self.oracles}) != n:
            raise ConfigError("oracle public keys must be distinct")
        object.__setattr__(self, "_by_id", {o.id: o for o in self.oracles})

    @property
    def n(self) -> int:
        return len(self.oracles)

    def get(self, oracle_id: int) -> Oracle:
        try:
            return self._by_id[oracle_id]
        except KeyError:
            raise UnknownOracle(oracle_id) from None

    def default_active_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self._by_id))[: self.active_count]


def majority_threshold(active: int) -> int:
    """ceil(M/2) + 1, capped at M."""
    return min(active, math.ceil(active / 2) + 1)


@dataclass(frozen=True)
class Attestation:
    oracle_id: int
    verdict: int
    signature: Signature
    fetch_failed: bool = False


@dataclass(frozen=True)
class AttestationSet:
    tx_digest: Digest
    verdicts: tuple[Attestation, ...]

    @property
    def approvals(self) -> tuple[int, ...]:
        return tuple(a.oracle_id for a in self.verdicts if a.verdict == 1)

    def total(self) -> int:
        return sum(a.verdict for a in self.verdicts)


def attest(oracle: Oracle, tx_digest: Digest, verdict: int,
           fetch_failed: bool = False) -> Attestation:
    return Attestation(oracle.id, verdict,
                       oracle.keypair.sign(attestation_message(tx_digest, verdict)),
                       fetch_failed)


def collect_attestations(registry: OracleRegistry, active_ids: Iterable[int],
                         tx_digest: Digest, x, query) -> AttestationSet:
    ids = sorted(set(active_ids))
    if len(ids) != registry.active_count:
        raise ValueError(f"expected {registry.active_count} active oracles, got {len(ids)}")
    out = []
    for oid in ids:
        oracle = registry.get(oid)
        try:
            verdict = oracle_evaluate(oracle, x, query, registry.tolerance, strict=True)
            failed = False
        except FetchError:
            verdict, failed = 0, True
        out.append(attest(oracle, tx_digest, verdict, failed))
    return AttestationSet(tx_digest, tuple(out))


def threshold_check(att: AttestationSet, threshold: int) -> bool:
    """Signature-checked sum of verdicts compared against ``threshold``."""
    seen = set()
    for a in att.verdicts:
        if a.oracle_id in seen:
            raise ValueError(f"duplicate verdict from oracle {a.oracle_id}")
        seen.add(a.oracle_id)
        if a.verdict not in (0, 1):
            raise ValueError(f"verdict must be 0 or 1, got {a.verdict}")
        msg = attestation_message(att.tx_digest, a.verdict)
        if not verify(a.signature.signer_key, msg, a.signature):
            raise BadSignature(f"verdict from oracle {a.oracle_id}")
    return sum(a.verdict for a in att.verdicts) >= threshold


def _pack(entries: Iterable[tuple[int, bytes]]) -> bytes:
    return b"".join(struct.pack(">I", oid) + sig for oid, sig in sorted(entries))


def aggregate_sign(registry: OracleRegistry, approving_ids: Iterable[int],
                   tx_digest: Digest) -> bytes:
    ids = set(approving_ids)
    if len(ids) < registry.threshold:
        raise ThresholdNotMet(f"{len(ids)} approvals < threshold {registry.threshold}")
    msg = attestation_message(tx_digest, 1)
    return _pack((oid, registry.get(oid).keypair.sign(msg).value) for oid in ids)


def aggregate_attestations(registry: OracleRegistry, att: AttestationSet) -> bytes:
    """Multi-signature blob from the approving verdicts already collected."""
    if not threshold_check(att, registry.threshold):
        raise ThresholdNotMet(f"{att.total()} approvals < threshold {registry.threshold}")
    for a in att.verdicts:
        if registry.get(a.oracle_id).public_key != a.signature.signer_key:
            raise BadSignature(f"oracle {a.oracle_id} signed with a foreign key")
    return _pack((a.oracle_id, a.signature.value) for a in att.verdicts if a.verdict == 1)


def parse_multisig(blob: bytes) -> list[tuple[int, bytes]] | None:
    if not blob or len(blob) % ENTRY_SIZE:
        return None
    entries = []
    for off in range(0, len(blob), ENTRY_SIZE):
        (oid,) = struct.unpack_from(">I", blob, off)
        entries.append((oid, blob[off + 4: off + ENTRY_SIZE]))
    return entries


def verify_multisig_blob(registry: OracleRegistry, blob: bytes, tx_digest: Digest) -> bool:
    entries = parse_multisig(blob)
    if entries is None:
        return False
    ids = [oid for oid, _ in entries]
    if ids != sorted(set(ids)):
        return False
    msg = attestation_message(tx_digest, 1)
    for oid, sig in entries:
        try:
            oracle = registry.get(oid)
        except UnknownOracle:
            return False
        if not verify(oracle.public_key, msg, sig):
            return False
    return len(entries) >= registry.threshold


def verify_multisig(registry: OracleRegistry, tx: Transaction) -> bool:
    return verify_multisig_blob(registry, tx.oracle_sig, attestation_digest(tx))


# -- fixtures ----------------------------------------------------------------

def oracle_from_config(entry: Mapping[str, Any]) -> Oracle:
    behavior = entry.get("behavior", "honest")
    if behavior == "honest":
        source = table_source(dict(entry.get("sources", {})))
    elif behavior == "always-reject":
        source = always_divergent
    else:
        raise ConfigError(f"unknown oracle behavior {behavior!r}")
    return Oracle(int(entry["id"]), keypair_generate(int(entry["seed"])), source)


def registry_from_config(cfg: Mapping[str, Any]) -> OracleRegistry:
    """Build a registry from ``{"oracles": [...], "active", "threshold", ...}``.

    Each oracle entry is ``{"id", "seed", "sources": {query: value}}`` with an
    optional ``"behavior": "always-reject"``.
    """
    try:
        oracles = tuple(oracle_from_config(e) for e in cfg["oracles"])
        active = int(cfg.get("active", len(oracles)))
        threshold = int(cfg.get("threshold", majority_threshold(active)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad oracle config: {exc}") from exc
    return OracleRegistry(oracles, active, threshold,
                          int(cfg.get("sig_len", 8 * SIGNATURE_SIZE)),
                          float(cfg.get("tolerance", 0.0)))
