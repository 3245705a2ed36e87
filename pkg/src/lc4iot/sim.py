"""Deterministic supply-chain scenario runner.

Stakeholders hand produce along a script of events. For every event the
sender's proxy stores the sensor payload in its cloud space, rotates the
produce key, gathers oracle attestations on the reading, signs a transfer
transaction and pushes it through the pool and LC4IoT. Transfers land on the
public chain; raw-data anchors land on the private chain.

All randomness comes from ``random.Random(seed)`` and block timestamps from a
step clock, so identical configs give byte-identical chains.
"""
from __future__ import annotations

import json
import logging
import random
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from . import membership, oracles as oracle_mod
from .clock import StepClock
from .consensus import Outcome, append_block_lc4iot
from .crypto import KeyPair, block_hash_calls, keypair_generate, sha256
from .errors import ConfigError, LedgerError, ThresholdNotMet, UnknownProduce
from .ledger import (
    Chain,
    Transaction,
    TxKind,
    Visibility,
    append_block,
    block_to_dict,
    encode_metadata,
    export_chain,
    make_transaction,
    new_chain,
    request_digest,
    trace_produce,
    validate_chain,
)
from .offchain import MAX_ONCHAIN_METADATA, AnchorLedger, CloudSpace, transfer_metadata
from .pool import VerifiedPool, pool_fetch_random, pool_submit, submit

log = logging.getLogger(__name__)

GENESIS_TS = 1_600_000_000_000

_BEHAVIORS = {
    "honest": membership.Behavior.HONEST,
    "faulty": membership.Behavior.FAULTY_REJECT,
    "faulty-reject": membership.Behavior.FAULTY_REJECT,
    "faulty-silent": membership.Behavior.FAULTY_SILENT,
}


@dataclass(frozen=True)
class Stakeholder:
    name: str
    role: str = "member"
    behavior: str = "honest"


@dataclass(frozen=True)
class Event:
    """One custody step. ``sender`` is ``None`` for a produce registration."""

    sender: str | None
    receiver: str
    produce: str
    reading: Any
    query: str = "*"


@dataclass
class ScenarioConfig:
    seed: int
    stakeholders: list[Stakeholder]
    oracles: dict
    f: int
    events: list[Event]
    genesis_ts: int = GENESIS_TS

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ScenarioConfig:
        try:
            return cls(
                seed=int(d.get("seed", 0)),
                stakeholders=[Stakeholder(s["name"], s.get("role", "member"),
                                          s.get("behavior", "honest"))
                              for s in d["stakeholders"]],
                oracles=dict(d["oracles"]),
                f=int(d["f"]),
                events=[Event(e.get("from"), e["to"], e["produce"], e["reading"],
                              e.get("query", "*")) for e in d["events"]],
                genesis_ts=int(d.get("genesis_ts", GENESIS_TS)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario config: {exc!r}") from exc

    @classmethod
    def load(cls, path: str | Path) -> ScenarioConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))


def validate_config(cfg: ScenarioConfig) -> None:
    """Raise :class:`ConfigError` unless the scenario can run as written."""
    names = [s.name for s in cfg.stakeholders]
    if len(set(names)) != len(names):
        raise ConfigError("stakeholder names must be unique")
    if cfg.f < 0 or len(names) < 3 * cfg.f + 1:
        raise ConfigError(f"{len(names)} stakeholders < 3f+1 with f={cfg.f}")
    for s in cfg.stakeholders:
        if s.behavior not in _BEHAVIORS:
            raise ConfigError(f"unknown behavior {s.behavior!r}")
    registered: set[str] = set()
    for i, ev in enumerate(cfg.events):
        if ev.receiver not in names or (ev.sender is not None and ev.sender not in names):
            raise ConfigError(f"event {i}: unknown stakeholder")
        if ev.sender is None:
            if ev.produce in registered:
                raise ConfigError(f"event {i}: {ev.produce} registered twice")
            registered.add(ev.produce)
        elif ev.produce not in registered:
            raise ConfigError(f"event {i}: {ev.produce} handed off before registration")
    # custody (who holds what) depends on which events get accepted; checked at run time


def _derive_seed(seed: int, label: str, i: int) -> int:
    h = sha256(struct.pack(">Q", seed % 2**64) + label.encode() + struct.pack(">I", i))
    return int.from_bytes(h[:8], "big")


# -- produce key rotation ----------------------------------------------------

@dataclass(frozen=True)
class ProduceState:
    name: str
    keypair: KeyPair
    holder: str


def register_produce(name: str, holder: str, rng: random.Random) -> tuple[ProduceState, dict]:
    kp = keypair_generate(rng.getrandbits(64))
    return ProduceState(name, kp, holder), {
        "produce": kp.public_key.hex(), "link_prev": "", "holder": holder, "lot": name,
    }


def rotate_produce_key(produces: Mapping[str, ProduceState], produce: str, new_holder: str,
                       rng: random.Random) -> tuple[ProduceState, dict]:
    """New key pair for ``produce``; metadata links it to the previous key."""
    try:
        old = produces[produce]
    except KeyError:
        raise UnknownProduce(produce) from None
    kp = keypair_generate(rng.getrandbits(64))
    return ProduceState(produce, kp, new_holder), {
        "produce": kp.public_key.hex(), "link_prev": old.keypair.public_key.hex(),
        "holder": new_holder, "lot": produce,
    }


# -- the run -----------------------------------------------------------------

@dataclass
class EventRecord:
    index: int
    status: str
    reason: str = ""
    block: int | None = None


@dataclass
class SimReport:
    seed: int
    public_chain: Chain
    private_chain: Chain
    events: list[EventRecord]
    traces: dict[str, list[dict]]
    sessions: list[dict]
    hash_calls: list[int] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        c = Counter(e.status for e in self.events)
        return {"accepted": c["accepted"], "rejected": c["rejected"],
                "genesis_routed": c["genesis-routed"], "total": len(self.events)}

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "counts": self.counts,
            "events": [vars(e) for e in self.events],
            "traces": self.traces,
            "sessions": self.sessions,
            "hash_calls": self.hash_calls,
            "violations": self.violations,
            "public_chain": [block_to_dict(b) for b in self.public_chain],
            "private_chain": [block_to_dict(b) for b in self.private_chain],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def export_public(self) -> str:
        return export_chain(self.public_chain)


class _World:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.identity: dict[str, KeyPair] = {}
        self.chain_key: dict[str, KeyPair] = {}
        voters = {}
        for i, s in enumerate(cfg.stakeholders):
            kp = keypair_generate(_derive_seed(cfg.seed, "stakeholder", i))
            self.identity[s.name] = kp
            self.chain_key[s.name] = kp
            voters[kp.public_key] = membership.Voter(kp, _BEHAVIORS[s.behavior])
        self.members = membership.MemberRegistry(frozenset(voters), cfg.f, cfg.seed, voters)
        self.oracles = oracle_mod.registry_from_config(cfg.oracles)
        self.active = self.oracles.default_active_ids()
        self.anchors = AnchorLedger(clock=StepClock(cfg.genesis_ts, 1))
        self.spaces = {
            s.name: CloudSpace(keypair_generate(_derive_seed(cfg.seed, "cloud", i)), self.anchors)
            for i, s in enumerate(cfg.stakeholders)
        }
        self.clock = StepClock(cfg.genesis_ts, 1000)
        self.chain = new_chain(Visibility.PUBLIC, self.clock.now_ms())
        self.pool = VerifiedPool(rng_seed=cfg.seed)
        self.produces: dict[str, ProduceState] = {}
        self.sessions: list[dict] = []
        self.applied: dict[str, list[int]] = {}
        self.hash_calls: list[int] = []


def _build_transaction(w: _World, i: int, ev: Event) -> tuple[Transaction, ProduceState]:
    sender_name = ev.sender if ev.sender is not None else ev.receiver
    sender = w.chain_key[sender_name]
    if ev.sender is None:
        state, lineage = register_produce(ev.produce, ev.receiver, w.rng)
    else:
        state, lineage = rotate_produce_key(w.produces, ev.produce, ev.receiver, w.rng)
    payload = encode_metadata({"event": i, "produce": ev.produce, "query": ev.query,
                               "reading": ev.reading})
    space = w.spaces[sender_name]
    meta, _ = transfer_metadata(space, sender, w.chain_key[ev.receiver].public_key, payload)
    meta.update(lineage, event=i, query=ev.query)
    raw = encode_metadata(meta)
    digest = request_digest(sender.public_key, space.owner_cpk, raw)
    att = oracle_mod.collect_attestations(w.oracles, w.active, digest, ev.reading, ev.query)
    blob = oracle_mod.aggregate_attestations(w.oracles, att)
    return make_transaction(sender, space.owner_cpk, raw, blob), state


def _process(w: _World, i: int, ev: Event) -> EventRecord:
    sender_name = ev.sender if ev.sender is not None else ev.receiver
    if ev.sender is not None and (ev.produce not in w.produces
                                  or w.produces[ev.produce].holder != ev.sender):
        return EventRecord(i, "rejected", "sender does not hold produce")
    try:
        tx, state = _build_transaction(w, i, ev)
        w.pool, _ = submit(w.pool, tx, w.chain, w.oracles, w.members)
    except ThresholdNotMet as exc:
        return EventRecord(i, "rejected", f"oracle threshold: {exc}")
    except LedgerError as exc:
        return EventRecord(i, "rejected", f"{type(exc).__name__}: {exc}")

    routed = False
    while len(w.pool):
        tx, w.pool = pool_fetch_random(w.pool)
        before = block_hash_calls.value
        out = append_block_lc4iot(w.chain, tx, w.oracles, w.members, w.clock)
        if out.result is Outcome.ROUTED_TO_GENESIS:
            routed = True
            g = out.genesis
            w.chain_key[sender_name] = g.allocated
            w.sessions.append({
                "event": i, "requester": g.session.candidate_pk.hex(),
                "allocated": g.allocated.public_key.hex(),
                "approvals": g.session.approvals, "rejections": g.session.rejections,
                "status": g.session.status.value,
            })
            w.pool = pool_submit(w.pool, out.tx)
        elif out.result is Outcome.NEW_BLOCK:
            w.chain = append_block(w.chain, out.block)
            w.hash_calls.append(block_hash_calls.value - before)
            w.produces[ev.produce] = state
            w.applied.setdefault(ev.produce, []).append(i)
            status = "genesis-routed" if routed else "accepted"
            return EventRecord(i, status, block=out.block.index)
        else:
            return EventRecord(i, "rejected", out.reason)
    return EventRecord(i, "rejected", "pool drained")


def _audit(w: _World, report: SimReport) -> list[str]:
    v = []
    c = report.counts
    if c["accepted"] + c["rejected"] + c["genesis_routed"] != c["total"]:
        v.append("event counts do not add up")
    if not validate_chain(w.chain):
        v.append("public chain invalid")
    if not validate_chain(w.anchors.chain):
        v.append("private chain invalid")
    seen_keys = Counter()
    genesis_senders = []
    for b in w.chain.blocks[1:]:
        meta = b.tx.meta or {}
        if "produce" in meta:
            seen_keys[meta["produce"]] += 1
        if b.tx.kind is TxKind.GENESIS:
            genesis_senders.append(b.tx.sender_pk.hex())
        elif len(b.tx.metadata) > MAX_ONCHAIN_METADATA:
            v.append(f"block {b.index}: metadata exceeds {MAX_ONCHAIN_METADATA} bytes")
    v += [f"produce key {k[:12]} used {n} times" for k, n in seen_keys.items() if n > 1]
    accepted = Counter(s["allocated"] for s in w.sessions if s["status"] == "accepted")
    if Counter(genesis_senders) != accepted or any(n != 1 for n in accepted.values()):
        v.append("genesis blocks do not match accepted sessions one-to-one")
    for name, events in w.applied.items():
        traced = [t["event"] for t in report.traces.get(name, [])]
        if traced != events:
            v.append(f"trace of {name} is {traced}, expected {events}")
    return v


def run_scenario(cfg: ScenarioConfig) -> SimReport:
    validate_config(cfg)
    w = _World(cfg)
    records = [_process(w, i, ev) for i, ev in enumerate(cfg.events)]

    traces = {}
    for name, state in sorted(w.produces.items()):
        traces[name] = [
            {"event": t.meta["event"], "holder": t.meta["holder"],
             "produce": t.meta["produce"], "link_prev": t.meta["link_prev"],
             "sender": t.sender_pk.hex(), "kind": t.kind.value}
            for t in trace_produce(w.chain, state.keypair.public_key)
        ]
    report = SimReport(cfg.seed, w.chain, w.anchors.chain, records, traces, w.sessions,
                       hash_calls=w.hash_calls)
    report.violations = _audit(w, report)
    return report


def format_traces(report: SimReport) -> str:
    lines = []
    for name, steps in report.traces.items():
        lines.append(f"{name}:")
        for s in steps:
            lines.append(f"  event {s['event']:>3}  -> {s['holder']:<12} "
                         f"key {s['produce'][:16]}  ({s['kind']})")
    c = report.counts
    lines.append(f"accepted={c['accepted']} rejected={c['rejected']} "
                 f"genesis-routed={c['genesis_routed']} total={c['total']}")
    return "\n".join(lines)
