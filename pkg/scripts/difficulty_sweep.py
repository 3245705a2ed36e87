"""Proof-of-work delay and hash work as difficulty grows, next to LC4IoT.

Writes one CSV row per difficulty: mean delay per block and mean hash calls.
"""
import argparse
import csv
import statistics
import sys

from lc4iot.bench import bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-difficulty", type=int, default=4)
    ap.add_argument("--blocks", type=int, default=10)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["consensus", "difficulty", "mean_delay_ms", "mean_hash_calls", "expected"])
    lc = bench("lc4iot", args.blocks, repeats=args.repeats, seed=args.seed, trace_memory=False)
    w.writerow(["lc4iot", "", f"{statistics.fmean(s.wall_ns for s in lc.samples) / 1e6:.4f}",
                statistics.fmean(lc.hash_calls()), 1])
    for d in range(args.max_difficulty + 1):
        run = bench("pow", args.blocks, d, args.repeats, args.seed, trace_memory=False)
        w.writerow(["pow", d, f"{statistics.fmean(s.wall_ns for s in run.samples) / 1e6:.4f}",
                    f"{statistics.fmean(run.hash_calls()):.1f}", 16**d])


if __name__ == "__main__":
    main()
