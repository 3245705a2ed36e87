"""Command-line entry point: ``lc4iot {bench,sim,chain} ...``.

Exit status is 0 on success, 2 on a configuration error and 1 when a run
or import finds an invariant violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bench import CONSENSUS, bench, report
from .errors import ConfigError, UnknownProduce
from .ledger import Chain, block_from_dict, chain_problems, export_chain, import_chain, trace_produce
from .sim import ScenarioConfig, format_traces, run_scenario

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


def _cmd_bench(args) -> int:
    run = bench(args.consensus, args.blocks, args.difficulty, args.repeats, args.seed,
                trace_memory=not args.no_trace_memory)
    csv_text, summary = report(run)
    if args.out:
        Path(args.out).write_text(csv_text)
    else:
        sys.stdout.write(csv_text)
    print(summary, file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def _cmd_sim_run(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    rep = run_scenario(cfg)
    if args.out:
        Path(args.out).write_text(rep.to_json())
    if args.export_chain:
        Path(args.export_chain).write_text(rep.export_public())
    print(format_traces(rep))
    for v in rep.violations:
        print(f"VIOLATION: {v}", file=sys.stderr)
    return EXIT_VIOLATION if rep.violations else EXIT_OK


def _load_chain(path: str) -> Chain:
    try:
        chain = import_chain(Path(path).read_text())
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a chain export ({exc!r})") from exc
    if not len(chain):
        raise ConfigError(f"{path}: empty chain file")
    return chain


def _cmd_chain_export(args) -> int:
    rep = json.loads(Path(args.report).read_text())
    key = "private_chain" if args.private else "public_chain"
    chain = Chain(tuple(block_from_dict(d) for d in rep[key]))
    Path(args.file).write_text(export_chain(chain))
    print(f"wrote {len(chain)} blocks to {args.file}")
    return EXIT_OK


def _cmd_chain_import(args) -> int:
    chain = _load_chain(args.file)
    problems = chain_problems(chain)
    for p in problems:
        print(f"INVALID: {p}", file=sys.stderr)
    print(f"{len(chain)} blocks, tip {chain.tip.hash.hex()}, valid={not problems}")
    return EXIT_VIOLATION if problems else EXIT_OK


def _cmd_chain_trace(args) -> int:
    chain = _load_chain(args.file)
    try:
        steps = trace_produce(chain, args.produce)
    except UnknownProduce:
        print(f"unknown produce key {args.produce}", file=sys.stderr)
        return EXIT_VIOLATION
    for tx in steps:
        m = tx.meta
        print(f"{m.get('event', '-'):>4}  {m['holder']:<12} {m['produce'][:16]}  "
              f"prev {m['link_prev'][:16] or '(registration)'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lc4iot", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="PoW vs LC4IoT delay/work/memory benchmark")
    b.add_argument("--consensus", choices=CONSENSUS, required=True)
    b.add_argument("--blocks", type=int, required=True)
    b.add_argument("--difficulty", type=int, default=None)
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="CSV output file (default: stdout)")
    b.add_argument("--no-trace-memory", action="store_true",
                   help="skip tracemalloc; memory falls back to RSS deltas")
    b.set_defaults(func=_cmd_bench)

    s = sub.add_parser("sim", help="supply-chain scenarios")
    ssub = s.add_subparsers(dest="sim_command", required=True)
    r = ssub.add_parser("run")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--out", help="report JSON")
    r.add_argument("--export-chain", help="write the public chain as JSON lines")
    r.set_defaults(func=_cmd_sim_run)

    c = sub.add_parser("chain", help="chain export, import and produce trace")
    csub = c.add_subparsers(dest="chain_command", required=True)
    e = csub.add_parser("export")
    e.add_argument("--report", required=True)
    e.add_argument("--file", required=True)
    e.add_argument("--private", action="store_true")
    e.set_defaults(func=_cmd_chain_export)
    i = csub.add_parser("import")
    i.add_argument("--file", required=True)
    i.set_defaults(func=_cmd_chain_import)
    t = csub.add_parser("trace")
    t.add_argument("--file", required=True)
    t.add_argument("--produce", required=True, help="any produce public key (hex)")
    t.set_defaults(func=_cmd_chain_trace)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
