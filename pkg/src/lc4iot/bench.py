"""Delay / work / memory comparison between proof of work and LC4IoT.

``hash_calls`` (block-header hash evaluations) is the hardware-independent
work metric. ``alloc_bytes`` is the traced Python allocation delta per block
when memory tracing is on, otherwise an RSS delta.
"""
from __future__ import annotations

import csv
import io
import statistics
import tracemalloc
from dataclasses import dataclass, field

from .clock import StepClock
from .consensus import append_block_lc4iot, run_lc4iot
from .crypto import KeyPair, keypair_generate
from .errors import ConfigError
from .ledger import Chain, append_block, encode_metadata, make_transaction, new_chain, request_digest
from .membership import MemberRegistry, honest_registry
from .metrics import MemorySampler
from .oracles import Oracle, OracleRegistry, aggregate_sign, table_source
from .pool import VerifiedPool, pool_submit
from .pow import PowParams, run_pow

CONSENSUS = ("pow", "lc4iot")
CSV_COLUMNS = ("consensus", "block_i", "repeat", "wall_ns", "hash_calls", "alloc_bytes")


@dataclass
class Fixture:
    chain: Chain
    pool: VerifiedPool
    oracles: OracleRegistry
    members: MemberRegistry
    sender: KeyPair


def build_fixture(n_txs: int, seed: int = 0, n_oracles: int = 3, threshold: int = 2,
                  f: int = 1) -> Fixture:
    """A chain where one sender is already admitted, and a pool of its transactions.

    The sender's registration goes through the genesis vote before any
    measurement starts, so every pooled transaction takes the NewBlock path.
    """
    base = (seed % 2**32) << 16
    oracles = OracleRegistry(
        tuple(Oracle(i, keypair_generate(base + 100 + i), table_source({"*": 4.0}))
              for i in range(n_oracles)),
        active_count=n_oracles, threshold=threshold,
    )
    members = honest_registry([base + 200 + i for i in range(3 * f + 1)], f, seed=seed)
    cloud = keypair_generate(base + 300).public_key
    clock = StepClock()
    chain = new_chain(genesis_ts=clock.now_ms())
    requester = keypair_generate(base + 1)

    def signed(sender: KeyPair, meta: dict):
        raw = encode_metadata(meta)
        blob = aggregate_sign(oracles, range(threshold),
                              request_digest(sender.public_key, cloud, raw))
        return make_transaction(sender, cloud, raw, blob)

    out = append_block_lc4iot(chain, signed(requester, {"register": "bench"}),
                              oracles, members, clock)
    sender = out.genesis.allocated
    chain = append_block(chain, append_block_lc4iot(chain, out.tx, oracles, members, clock).block)

    pool = VerifiedPool(rng_seed=seed)
    for i in range(n_txs):
        pool = pool_submit(pool, signed(sender, {"seq": i, "seed": seed, "reading": 4.0}))
    return Fixture(chain, pool, oracles, members, sender)


@dataclass(frozen=True)
class Sample:
    repeat: int
    block_i: int
    wall_ns: int
    hash_calls: int
    alloc_bytes: int
    cpu_ns: int


@dataclass
class BenchRun:
    consensus: str
    blocks: int
    difficulty: int | None
    repeats: int
    seed: int
    samples: list[Sample] = field(default_factory=list)
    baseline_bytes: list[int] = field(default_factory=list)
    exact_memory: bool = True

    def hash_calls(self) -> list[int]:
        return [s.hash_calls for s in self.samples]

    def wall_seconds(self, repeat: int | None = None) -> float:
        return sum(s.wall_ns for s in self.samples
                   if repeat is None or s.repeat == repeat) / 1e9


def bench(consensus: str, blocks: int, difficulty: int | None = None, repeats: int = 1,
          seed: int = 0, trace_memory: bool = True) -> BenchRun:
    if consensus not in CONSENSUS:
        raise ConfigError(f"consensus must be one of {CONSENSUS}")
    if blocks < 0 or repeats < 1:
        raise ConfigError("need blocks >= 0 and repeats >= 1")
    if consensus == "pow":
        difficulty = 4 if difficulty is None else difficulty
        try:
            params = PowParams(difficulty)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    run = BenchRun(consensus, blocks, difficulty if consensus == "pow" else None, repeats, seed)
    sampler = MemorySampler()
    started = False
    if trace_memory and not tracemalloc.is_tracing():
        tracemalloc.start()
        started = True
    try:
        run.exact_memory = sampler.exact
        for r in range(repeats):
            fx = build_fixture(blocks, seed * 1009 + r)
            clock = StepClock(start=fx.chain.tip.ts + 1000)
            run.baseline_bytes.append(sampler())
            if consensus == "pow":
                res = run_pow(fx.chain, fx.pool, params, blocks, clock, sampler)
            else:
                res = run_lc4iot(fx.chain, fx.pool, fx.oracles, fx.members, blocks, clock, sampler)
            run.samples += [Sample(r, i, m.wall_ns, m.hash_calls, m.alloc_bytes, m.cpu_ns)
                            for i, m in enumerate(res.metrics)]
    finally:
        if started:
            tracemalloc.stop()
    return run


def to_csv(run: BenchRun) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in run.samples:
        w.writerow((run.consensus, s.block_i, s.repeat, s.wall_ns, s.hash_calls, s.alloc_bytes))
    return buf.getvalue()


def summarize(run: BenchRun) -> dict:
    walls = [s.wall_ns for s in run.samples] or [0]
    calls = run.hash_calls() or [0]
    growth = []
    for r, base in enumerate(run.baseline_bytes):
        total = sum(s.alloc_bytes for s in run.samples if s.repeat == r)
        if base and run.blocks:
            growth.append(100.0 * total / base / run.blocks)
    return {
        "consensus": run.consensus,
        "difficulty": run.difficulty,
        "blocks": run.blocks,
        "repeats": run.repeats,
        "mean_delay_ms": statistics.fmean(walls) / 1e6,
        "max_delay_ms": max(walls) / 1e6,
        "mean_total_delay_s": run.wall_seconds() / run.repeats,
        "total_hash_calls": sum(calls),
        "mean_hash_calls_per_block": statistics.fmean(calls),
        "memory_growth_pct_per_block": statistics.fmean(growth) if growth else 0.0,
        "memory_exact": run.exact_memory,
    }


def format_summary(summary: dict) -> str:
    mem = "" if summary["memory_exact"] else " (approximate, RSS)"
    diff = f" difficulty={summary['difficulty']}" if summary["difficulty"] is not None else ""
    return "\n".join([
        f"{summary['consensus']}{diff}: {summary['blocks']} blocks x {summary['repeats']} repeats",
        f"  delay per block   mean {summary['mean_delay_ms']:.3f} ms, "
        f"max {summary['max_delay_ms']:.3f} ms",
        f"  delay per run     {summary['mean_total_delay_s']:.4f} s",
        f"  hash calls        total {summary['total_hash_calls']}, "
        f"mean/block {summary['mean_hash_calls_per_block']:.1f}",
        f"  memory growth     {summary['memory_growth_pct_per_block']:.4f} % per block{mem}",
    ])


def report(run: BenchRun) -> tuple[str, str]:
    """CSV text and a human-readable summary."""
    return to_csv(run), format_summary(summarize(run))
