"""Ten-block delay comparison of proof of work (difficulty 4) against LC4IoT.

    python scripts/compare_consensus.py --repeats 3 --out results/
"""
import argparse
import statistics
from pathlib import Path

from lc4iot.bench import bench, format_summary, summarize, to_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--blocks", type=int, default=10)
    ap.add_argument("--difficulty", type=int, default=4)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, help="directory for per-block CSVs")
    args = ap.parse_args()

    runs = {
        "pow": bench("pow", args.blocks, args.difficulty, args.repeats, args.seed,
                     trace_memory=False),
        "lc4iot": bench("lc4iot", args.blocks, None, args.repeats, args.seed,
                        trace_memory=False),
    }
    for name, run in runs.items():
        print(format_summary(summarize(run)))
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / f"{name}.csv").write_text(to_csv(run))

    per_run = {name: [run.wall_seconds(r) for r in range(args.repeats)]
               for name, run in runs.items()}
    pow_s, lc_s = statistics.median(per_run["pow"]), statistics.median(per_run["lc4iot"])
    print(f"\nmedian time for {args.blocks} blocks: pow {pow_s:.3f} s, lc4iot {lc_s:.4f} s, "
          f"ratio {pow_s / lc_s:.0f}x")


if __name__ == "__main__":
    main()
