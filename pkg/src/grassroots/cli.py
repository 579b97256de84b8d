"""Command-line front end.

Exit codes: 0 success, 1 verification failure (or a scenario script that
cannot proceed), 2 usage error or unreadable input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from .analytics import CURRENT_RATIO_CAVEAT, holdings, liquidity_report, reclaim_counts
from .gcd import AllToAllRules, GcdRules
from .mts import (MAX_DEPTH, BudgetExceeded, KernelError, check_grassroots_bounded, check_live_bounded,
                  check_safe)
from .sc import claim_reports
from .sigma import verify_refinement
from .sim.engine import METRIC_COLUMNS, ScriptError, run_scenario
from .sim.eventlog import ReplayMismatch, read_log, replay
from .sim.spec import SpecError, load_spec

log = logging.getLogger("grassroots")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _setup_logging() -> None:
    level = os.environ.get("GRASSROOTS_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load_replay(path):
    elog = read_log(path)
    return replay(elog)


# -- commands --------------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        spec = load_spec(args.scenario)
    except FileNotFoundError:
        raise UsageError(f"no such scenario file: {args.scenario}")
    if args.seed is not None:
        spec.seed = args.seed
    if args.horizon is not None:
        if args.horizon < 0:
            raise UsageError("--horizon must be nonnegative")
        spec.horizon = args.horizon
    try:
        res = run_scenario(spec)
    except ScriptError as e:
        print(f"script error: {e}", file=sys.stderr)
        return EXIT_FAIL
    res.write(args.out)
    print(f"{spec.name}: {res.rounds} rounds, {len(res.log.events)} events -> {args.out}")
    for d in res.stalled:
        print(f"stalled: {d}")
    for who, r in sorted(res.culprits.items()):
        print(f"doublespender {who} detected in round {r}")
    return EXIT_OK


def _step_round(rp, i: int) -> int:
    return rp.rounds[i] if 0 <= i < len(rp.rounds) else rp.run.end_round


def cmd_verify(args) -> int:
    rp = _load_replay(args.eventlog)
    n = len(rp.agents)
    horizon = args.horizon or n
    problems = []
    if args.mode == "refinement":
        rep = verify_refinement(rp.run, horizon=horizon)
        for v in rep.violations:
            where = f"round {_step_round(rp, v.step)}" if v.step >= 0 else "end of run"
            problems.append(f"{v.kind} at {where}: {v.detail}")
        summary = f"{rep.sigma_steps} coin steps, {rep.stutters} stutters"
    elif args.mode == "safety":
        for v in check_safe(rp.run):
            problems.append(f"unsafe dissemination step at round {_step_round(rp, v.index)} by {v.actor}: "
                            f"{v.reason} {v.detail}".rstrip())
        rep = verify_refinement(rp.run, check_liveness=False)
        for v in rep.violations:
            problems.append(f"{v.kind} coin step at round {_step_round(rp, v.step)}: {v.detail}")
        summary = f"{len(rp.run)} steps checked"
    else:
        for f in check_live_bounded(rp.run, GcdRules().liveness(), horizon):
            problems.append("starvation: " + f.describe())
        rep = verify_refinement(rp.run, horizon=horizon)
        for v in rep.violations:
            if v.kind == "starvation":
                problems.append("starvation: " + v.detail)
            elif v.kind == "sigma-undefined":
                problems.append(f"coin view undefined at round {_step_round(rp, v.step)}: {v.detail}")
        summary = f"horizon {horizon} rounds"
    for p in problems:
        print(p)
    print(f"{args.mode}: {'FAIL' if problems else 'OK'} ({summary})")
    return EXIT_FAIL if problems else EXIT_OK


def analyze_rows(rp, at: int | None, quick_depth: int = 1) -> list[dict]:
    last = rp.run.end_round if rp.run.end_round is not None else 0
    r = last if at is None else at
    c = rp.config_at_round(r)
    m = holdings(c, r)
    return liquidity_report(m, rp.agents, quick_depth).rows(r)


def cmd_analyze(args) -> int:
    rp = _load_replay(args.eventlog)
    rows = analyze_rows(rp, args.at, args.quick_depth)
    cols = [k for k in METRIC_COLUMNS if k != "doublespender"]
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    widths = {k: max(len(k), *(len(str(r[k])) for r in rows)) if rows else len(k) for k in cols}
    print("  ".join(k.ljust(widths[k]) for k in cols))
    for r in rows:
        print("  ".join(str(r[k]).ljust(widths[k]) for k in cols))
    print(f"note: {CURRENT_RATIO_CAVEAT}")
    return EXIT_OK


def cmd_grassroots(args) -> int:
    if args.p < 1 or args.pprime <= args.p:
        raise UsageError("need 1 <= --p < --pprime")
    if args.depth > MAX_DEPTH or args.depth < 0:
        print(f"BudgetExceeded: depth {args.depth} outside 0..{MAX_DEPTH}", file=sys.stderr)
        return EXIT_USAGE
    agents = [f"a{i}" for i in range(args.pprime)]
    factory = (lambda a: GcdRules()) if args.protocol == "gcd" else AllToAllRules
    try:
        v = check_grassroots_bounded(factory, agents[:args.p], agents, args.depth, args.state_cap)
    except BudgetExceeded as e:
        print(f"BudgetExceeded: {e}", file=sys.stderr)
        return EXIT_USAGE
    print(v.verdict)
    print(f"behaviours: |TS(P)|={v.behaviours_small} |TS(P')/P|={v.behaviours_projected}")
    if not v.consistent:
        print(v.note)
        if v.run is not None:
            for k, c in enumerate(v.run):
                print(f"  {k}: {c!r}")
        return EXIT_FAIL
    return EXIT_OK


def cmd_enumerate_claims(args) -> int:
    rp = _load_replay(args.eventlog)
    reps = claim_reports(rp.run.final.world)
    if args.json:
        print(json.dumps([r.to_json() for r in reps], indent=2, sort_keys=True))
        return EXIT_OK
    for r in reps:
        cl = r.claim
        req = cl.requested.short if cl.requested is not None else "fresh"
        print(f"{cl.nft.short}  {cl.claimant} -> {cl.obligor}  requested={req}  {r.status.value}")
    print(f"{len(reps)} claims")
    for (a, b), k in sorted(reclaim_counts(rp.run.final.world).items()):
        print(f"re-claims after rejection: {a} -> {b}: {k}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="grassroots", description="Grassroots coin simulator and verifier")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="check a recorded run")
    p.add_argument("eventlog")
    p.add_argument("--mode", choices=("refinement", "safety", "liveness"), default="refinement")
    p.add_argument("--horizon", type=int, help="liveness horizon in rounds (default: number of agents)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("analyze", help="liquidity metrics of a recorded run")
    p.add_argument("eventlog")
    p.add_argument("--at", type=int, metavar="ROUND")
    p.add_argument("--csv", metavar="PATH")
    p.add_argument("--quick-depth", type=int, default=1)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("grassroots", help="bounded grassroots check")
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--pprime", type=int, default=3)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--protocol", choices=("gcd", "ata"), default="gcd")
    p.add_argument("--state-cap", type=int, default=10 ** 6)
    p.set_defaults(func=cmd_grassroots)

    p = sub.add_parser("enumerate-claims", help="list redemption claims and their status")
    p.add_argument("eventlog")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_enumerate_claims)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SpecError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ReplayMismatch as e:
        print(f"ReplayMismatch: {e}", file=sys.stderr)
        return EXIT_USAGE
    except KernelError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
