"""LC4IoT block appending: an oracle-signature gate instead of a hash puzzle.

Each accepted block costs exactly one block-hash evaluation.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

from .crypto import cal_block_hash
from .errors import EmptyPool, InsufficientNetwork, QuorumFailed
from .ledger import Block, Chain, Transaction, TxKind, append_block, find_sender
from .membership import GenesisResult, MemberRegistry, admit_genesis, verify_genesis_certificate
from .metrics import BlockMetric, BlockTimer, MemorySampler
from .oracles import OracleRegistry, verify_multisig
from .pool import VerifiedPool, pool_fetch_random, pool_submit

log = logging.getLogger(__name__)


class Outcome(enum.Enum):
    NEW_BLOCK = "new-block"
    ROUTED_TO_GENESIS = "routed-to-genesis"
    REJECTED = "rejected"


@dataclass(frozen=True)
class AppendOutcome:
    result: Outcome
    block: Block | None = None
    tx: Transaction | None = None
    genesis: GenesisResult | None = None
    reason: str = ""


def append_block_lc4iot(chain: Chain, tx: Transaction, oracles: OracleRegistry,
                        members: MemberRegistry, clock) -> AppendOutcome:
    """Try to build the next block for ``tx``. Never mutates ``chain``.

    * oracle multi-signature invalid or under threshold -> ``REJECTED``
    * sender key unknown on chain -> quorum vote, ``ROUTED_TO_GENESIS`` with
      the rewritten transaction (or ``REJECTED`` if the vote fails)
    * otherwise -> ``NEW_BLOCK`` linked to the tip
    """
    if not verify_multisig(oracles, tx):
        return AppendOutcome(Outcome.REJECTED, tx=tx, reason="oracle signature")

    known = find_sender(chain, tx.sender_pk) is not None
    if tx.kind is TxKind.GENESIS:
        if known:
            return AppendOutcome(Outcome.REJECTED, tx=tx, reason="allocated key reused")
        if not verify_genesis_certificate(tx, members):
            return AppendOutcome(Outcome.REJECTED, tx=tx, reason="quorum certificate")
    elif not known:
        try:
            g = admit_genesis(tx, members)
        except (QuorumFailed, InsufficientNetwork) as exc:
            return AppendOutcome(Outcome.REJECTED, tx=tx, reason=f"genesis: {exc}")
        return AppendOutcome(Outcome.ROUTED_TO_GENESIS, tx=g.tx, genesis=g)

    tip = chain.tip
    # timestamps must not run backwards along the chain
    ts = max(clock.now_ms(), tip.ts)
    index = tip.index + 1
    h = cal_block_hash(index, tip.hash, ts, tx)
    return AppendOutcome(Outcome.NEW_BLOCK, block=Block(index, tip.hash, ts, tx, h), tx=tx)


@dataclass
class RunResult:
    chain: Chain
    pool: VerifiedPool
    metrics: list[BlockMetric] = field(default_factory=list)
    outcomes: list[AppendOutcome] = field(default_factory=list)

    def count(self, kind: Outcome) -> int:
        return sum(o.result is kind for o in self.outcomes)


def run_lc4iot(chain: Chain, pool: VerifiedPool, oracles: OracleRegistry,
               members: MemberRegistry, n_blocks: int, clock,
               sampler: MemorySampler | None = None) -> RunResult:
    """Append exactly ``n_blocks`` blocks drawn at random from ``pool``.

    Genesis-routed transactions go back into the pool in rewritten form;
    rejected ones are dropped. Raises :class:`EmptyPool` (carrying the
    partial chain and metrics) if the pool runs dry first.
    """
    res = RunResult(chain, pool)
    timer = BlockTimer(sampler)
    appended = 0
    while appended < n_blocks:
        try:
            tx, res.pool = pool_fetch_random(res.pool)
        except EmptyPool:
            raise EmptyPool(f"pool empty after {appended} of {n_blocks} blocks",
                            chain=res.chain, metrics=res.metrics) from None
        out = append_block_lc4iot(res.chain, tx, oracles, members, clock)
        res.outcomes.append(out)
        if out.result is Outcome.NEW_BLOCK:
            res.chain = append_block(res.chain, out.block)
            appended += 1
            res.metrics.append(timer.finish(out.block.index))
        elif out.result is Outcome.ROUTED_TO_GENESIS:
            res.pool = pool_submit(res.pool, out.tx)
        else:
            log.info("rejected transaction %s: %s", tx.tx_id.hex()[:12], out.reason)
    return res
