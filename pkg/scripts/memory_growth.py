"""Traced allocation per appended block over a long LC4IoT run.

Fits cumulative traced bytes against block count (linear and quadratic)
and optionally dumps the per-block series as CSV.
"""
import argparse
import tracemalloc

import numpy as np

from lc4iot.bench import build_fixture
from lc4iot.clock import StepClock
from lc4iot.consensus import run_lc4iot
from lc4iot.metrics import MemorySampler


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--blocks", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv")
    args = ap.parse_args()

    tracemalloc.start()
    fx = build_fixture(args.blocks, seed=args.seed)
    base = tracemalloc.get_traced_memory()[0]
    res = run_lc4iot(fx.chain, fx.pool, fx.oracles, fx.members, args.blocks,
                     StepClock(fx.chain.tip.ts + 1000), MemorySampler())
    tracemalloc.stop()

    per_block = np.array([m.alloc_bytes for m in res.metrics], dtype=float)
    cum = np.cumsum(per_block)
    x = np.arange(1, len(cum) + 1, dtype=float)
    slope, icpt = np.polyfit(x, cum, 1)
    r2 = 1 - np.sum((cum - (slope * x + icpt)) ** 2) / np.sum((cum - cum.mean()) ** 2)
    a2, a1, _ = np.polyfit(x, cum, 2)
    print(f"blocks {len(cum)}  slope {slope:.1f} B/block  R^2 {r2:.5f}  "
          f"quadratic/linear {abs(a2) / abs(a1):.2e}  "
          f"growth {100 * slope / base:.4f} % of baseline per block")
    if args.csv:
        np.savetxt(args.csv, np.column_stack([x, per_block, cum]), delimiter=",",
                   header="block,alloc_bytes,cumulative_bytes", comments="", fmt="%d")


if __name__ == "__main__":
    main()
