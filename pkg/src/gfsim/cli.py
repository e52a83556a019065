"""Command-line front end: simulate campaigns, query collision probabilities,
and run the built-in validation checks."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import acceptance, sim
from .config import ConfigError, load_config
from .pilots import (
    CollisionEvent,
    PilotLayout,
    imp_pairwise_collision_probability,
    simulate_collision_probability,
    tsp_collision_probability,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfsim",
        description="Grant-free uplink link-level simulator (single- and multi-pilot access)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a campaign from a config file")
    p_sim.add_argument("--config", required=True, help="campaign config path")
    p_sim.add_argument("--out", required=True, help="output CSV path")
    p_sim.add_argument(
        "--threads", type=int, default=os.cpu_count() or 1,
        help="worker threads (default: all cores); results do not depend on it",
    )
    p_sim.add_argument("--seed", type=int, default=None, help="override base_seed")

    p_col = sub.add_parser("collision", help="closed-form pilot collision probability")
    p_col.add_argument("--n", required=True, help="pool size(s), comma separated")
    p_col.add_argument("--w", type=int, default=1, help="pilots per user (1 = single-pilot)")
    p_col.add_argument("--k", required=True, help="user count(s), comma separated")
    p_col.add_argument(
        "--trials", type=int, default=0,
        help="also run a Monte Carlo cross-check with this many trials",
    )
    p_col.add_argument("--seed", type=int, default=0)

    p_val = sub.add_parser("validate", help="run the built-in validation criteria")
    p_val.add_argument(
        "--criteria", default=None,
        help="comma-separated criterion numbers (default: all)",
    )
    p_val.add_argument(
        "--quick", action="store_true",
        help="reduced trial counts; a smoke test, not the binding check",
    )
    return parser


def _parse_int_list(raw: str) -> list[int]:
    try:
        return [int(p.strip()) for p in raw.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}")


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        print(f"error: config file {args.config!r} not found", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, base_seed=args.seed)
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_USAGE
    rows = sim.run_campaign(cfg, threads=args.threads)
    sim.write_results(rows, args.out)
    flagged = sum(r.low_confidence for r in rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    if flagged:
        print(f"note: {flagged} row(s) have fewer than {sim.MIN_ERROR_EVENTS} error events")
    return EXIT_OK


def cmd_collision(args: argparse.Namespace) -> int:
    try:
        pools = _parse_int_list(args.n)
        loads = _parse_int_list(args.k)
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not pools or not loads or args.w < 1:
        print("error: need --n, --k and --w >= 1", file=sys.stderr)
        return EXIT_USAGE
    single = len(pools) == 1 and len(loads) == 1 and not args.trials
    for n in pools:
        for k in loads:
            try:
                if args.w == 1:
                    closed = tsp_collision_probability(n, k)
                else:
                    closed = imp_pairwise_collision_probability(n, args.w, k)
            except ValueError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_USAGE
            if single:
                print(f"{closed:.6f}")
                continue
            line = f"n={n} w={args.w} k={k} p={closed:.6f}"
            if args.trials:
                layout = (
                    PilotLayout.tsp(n) if args.w == 1 else PilotLayout.imp(n * args.w, args.w)
                )
                event = (
                    CollisionEvent.ANY_TSP_COLLISION
                    if args.w == 1
                    else CollisionEvent.ANY_PAIR_ALL_PILOTS
                )
                est, se = simulate_collision_probability(
                    layout, k, event, args.trials, args.seed
                )
                line += f" mc={est:.6f} se={se:.6f}"
            print(line)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    numbers = None
    if args.criteria:
        try:
            numbers = _parse_int_list(args.criteria)
        except argparse.ArgumentTypeError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        unknown = [n for n in numbers if n not in acceptance.CRITERIA]
        if unknown:
            print(f"error: unknown criteria {unknown}", file=sys.stderr)
            return EXIT_USAGE
    results = acceptance.run_criteria(numbers, quick=args.quick)
    for res in results:
        print(res.format_line())
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed"
          + (" (quick mode)" if args.quick else ""))
    return EXIT_OK if n_fail == 0 else EXIT_FAILURE


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate":
        return cmd_simulate(args)
    if args.command == "collision":
        return cmd_collision(args)
    return cmd_validate(args)


# importable alias for embedding callers
cli_main = main


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
