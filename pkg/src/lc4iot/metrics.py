"""Per-block measurements shared by the LC4IoT and proof-of-work runners."""
from __future__ import annotations

import os
import time
import tracemalloc
from dataclasses import dataclass

from .crypto import block_hash_calls


@dataclass(frozen=True)
class BlockMetric:
    block_index: int
    wall_ns: int
    hash_calls: int
    alloc_bytes: int
    cpu_ns: int


def _rss_bytes() -> int:
    try:
        with open("/proc/self/statm") as fh:
            return int(fh.read().split()[1]) * os.sysconf("SC_PAGE_SIZE")
    except (OSError, ValueError, IndexError):
        return 0


class MemorySampler:
    """Current memory reading: traced Python allocations if ``tracemalloc``
    is running, otherwise process RSS (coarse; page granularity)."""

    @property
    def exact(self) -> bool:
        return tracemalloc.is_tracing()

    def __call__(self) -> int:
        if tracemalloc.is_tracing():
            return tracemalloc.get_traced_memory()[0]
        return _rss_bytes()


class BlockTimer:
    """Accumulates cost between two appended blocks."""

    def __init__(self, sampler: MemorySampler | None = None):
        self.sampler = sampler or MemorySampler()
        self.reset()

    def reset(self) -> None:
        self._wall = time.perf_counter_ns()
        self._cpu = time.process_time_ns()
        self._hashes = block_hash_calls.value
        self._mem = self.sampler()

    def finish(self, block_index: int) -> BlockMetric:
        m = BlockMetric(
            block_index=block_index,
            wall_ns=time.perf_counter_ns() - self._wall,
            hash_calls=block_hash_calls.value - self._hashes,
            alloc_bytes=self.sampler() - self._mem,
            cpu_ns=time.process_time_ns() - self._cpu,
        )
        self.reset()
        return m
