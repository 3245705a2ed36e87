"""Proof-of-work miner, the comparison baseline for LC4IoT.

Difficulty counts leading zero hex digits of the block hash. The header
hashed is the LC4IoT header followed by an 8-byte big-endian nonce.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from .crypto import DIGEST_SIZE, Digest, block_hash_calls, block_header
from .errors import EmptyPool, Exhausted
from .ledger import Block, Chain, Transaction, append_block, chain_problems
from .metrics import BlockTimer, MemorySampler
from .consensus import RunResult
from .pool import VerifiedPool, pool_fetch_random

MAX_NONCE = 2**64 - 1


@dataclass(frozen=True)
class PowParams:
    difficulty: int = 4
    max_nonce: int = MAX_NONCE

    def __post_init__(self):
        if not 0 <= self.difficulty <= 2 * DIGEST_SIZE:
            raise ValueError(f"difficulty out of range: {self.difficulty}")
        if not 0 < self.max_nonce <= MAX_NONCE:
            raise ValueError("max_nonce must be in (0, 2^64)")


def meets_difficulty(h: Digest, difficulty: int) -> bool:
    """True iff the hex rendering of ``h`` starts with ``difficulty`` zeros."""
    full, half = divmod(difficulty, 2)
    if any(h[:full]):
        return False
    return not half or h[full] < 0x10


def mine_block(chain: Chain, tx: Transaction, params: PowParams, clock) -> tuple[Block, int]:
    """Search nonces 0, 1, 2, ... for a hash meeting the difficulty.

    The timestamp is taken once, before the search. Returns the mined block
    and the number of hashes tried.
    """
    tip = chain.tip
    index = tip.index + 1
    ts = max(clock.now_ms(), tip.ts)
    base = hashlib.sha256(block_header(index, tip.hash, ts, tx))
    full, half = divmod(params.difficulty, 2)
    zeros = bytes(full)
    pack = struct.Struct(">Q").pack
    attempts = 0
    try:
        for nonce in range(params.max_nonce + 1):
            attempts += 1
            c = base.copy()
            c.update(pack(nonce))
            h = c.digest()
            if h[:full] == zeros and (not half or h[full] < 0x10):
                return Block(index, tip.hash, ts, tx, h, nonce), attempts
    finally:
        block_hash_calls.add(attempts)
    raise Exhausted(f"no nonce <= {params.max_nonce} meets difficulty {params.difficulty}")


def validate_pow_chain(chain: Chain, difficulty: int) -> bool:
    if chain_problems(chain):
        return False
    return all(b.nonce is not None and meets_difficulty(b.hash, difficulty)
               for b in chain.blocks[1:])


def run_pow(chain: Chain, pool: VerifiedPool, params: PowParams, n_blocks: int, clock,
            sampler: MemorySampler | None = None) -> RunResult:
    res = RunResult(chain, pool)
    timer = BlockTimer(sampler)
    for appended in range(n_blocks):
        try:
            tx, res.pool = pool_fetch_random(res.pool)
        except EmptyPool:
            raise EmptyPool(f"pool empty after {appended} of {n_blocks} blocks",
                            chain=res.chain, metrics=res.metrics) from None
        block, _ = mine_block(res.chain, tx, params, clock)
        res.chain = append_block(res.chain, block)
        res.metrics.append(timer.finish(block.index))
    return res
