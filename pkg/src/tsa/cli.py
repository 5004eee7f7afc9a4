"""Command-line front end.

Every subcommand takes a case file path or the name of a shipped scenario.
Exit codes: 0 stable, 10 original system unstable, 11 unstable with a
divergent inner group, 2 error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from .errors import TSAError
from .grouping import candidate_patterns, candidates_csv_rows, rank_candidates
from .frames import id_sort_key
from .report import (
    EXIT_ERROR,
    EXIT_STABLE,
    RunFlags,
    cct_search,
    output_dir,
    resolve_target,
    run_many,
    timing_report,
    verdict_summary,
)
from .scenarios import load_scenarios
from .simulator import simulate, write_trajectory_csv

CCT_T_END = 3.0


def _pattern_arg(text: str):
    if text == "auto":
        return "auto"
    ids = tuple(p.strip() for p in text.split(",") if p.strip())
    if not ids:
        raise argparse.ArgumentTypeError("pattern must be 'auto' or comma-separated machine ids")
    return ids


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "t_end", None) is not None:
        out["t_end"] = args.t_end
    if getattr(args, "dt", None) is not None:
        out["dt"] = args.dt
    pattern = getattr(args, "pattern", None)
    if pattern is not None:
        out["pattern"] = None if pattern == "auto" else pattern
    return out


def _resolved(args) -> tuple:
    case, defaults = resolve_target(args.case)
    flags = RunFlags(**{**defaults.__dict__, **_overrides(args)})
    return case, flags


def cmd_simulate(args) -> int:
    case, flags = _resolved(args)
    traj = simulate(case, flags.t_end, flags.dt)
    path = write_trajectory_csv(traj, output_dir(flags, case.name) / "trajectory.csv")
    print(path)
    return EXIT_STABLE


def cmd_analyze(args) -> int:
    results = run_many(args.case, _overrides(args), args.jobs)
    w = csv.writer(sys.stdout)
    w.writerow(["case", "omega_cr", "original_unstable", "edlp_time", "quality", "ordering_ok", "exit"])
    for r in results:
        v = r.verdict
        w.writerow([
            r.case_name,
            " ".join(sorted(r.pattern.omega_cr, key=id_sort_key)),
            str(v.original_unstable).lower(),
            "" if r.edlp_time is None else f"{r.edlp_time:.6f}",
            v.quality,
            str(v.ordering_ok).lower(),
            r.exit_code,
        ])
    return max(r.exit_code for r in results)


def cmd_patterns(args) -> int:
    case, flags = _resolved(args)
    traj = simulate(case, flags.t_end, flags.dt)
    ranked = rank_candidates(traj, candidate_patterns(traj, args.t_eval, args.k_max))
    csv.writer(sys.stdout).writerows(candidates_csv_rows(ranked))
    return EXIT_STABLE


def cmd_cct(args) -> int:
    case, flags = _resolved(args)
    t_end = args.t_end if args.t_end is not None else CCT_T_END
    res = cct_search(case, args.lo, args.hi, args.tol, t_end=t_end, dt=flags.dt)
    print(json.dumps({"case": case.name, "cct": res.cct, "lo": res.lo, "hi": res.hi, "iterations": res.iterations}))
    return EXIT_STABLE


def cmd_report(args) -> int:
    (result,) = run_many([args.case], _overrides(args), 1)
    print(json.dumps(verdict_summary(result), indent=2, sort_keys=True))
    print(timing_report(result).render(), end="")
    return result.exit_code


def cmd_scenarios(args) -> int:
    for sc in load_scenarios():
        print(f"{sc.name}\t{sc.case}\tbus {sc.fault_bus}\tclear {sc.clear_time}\t{sc.note}")
    return EXIT_STABLE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tsa", description="Transient stability analysis with inner-group machines.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, pattern=False):
        sp.add_argument("--dt", type=float, default=None, help="integration step in seconds (default 0.001)")
        sp.add_argument("--t-end", dest="t_end", type=float, default=None, help="simulated horizon in seconds")
        if pattern:
            sp.add_argument("--pattern", type=_pattern_arg, default=None,
                            help="critical machine ids 'a,b' or 'auto'")

    sp = sub.add_parser("simulate", help="integrate and export the trajectory CSV")
    sp.add_argument("case")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("analyze", help="full analysis with CSV/JSON exports")
    sp.add_argument("case", nargs="+")
    sp.add_argument("--jobs", type=int, default=1, help="run several cases in parallel processes")
    common(sp, pattern=True)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("patterns", help="candidate group-separation patterns as CSV")
    sp.add_argument("case")
    sp.add_argument("--t-eval", dest="t_eval", type=float, default=None)
    sp.add_argument("--k-max", dest="k_max", type=int, default=3)
    common(sp)
    sp.set_defaults(func=cmd_patterns)

    sp = sub.add_parser("cct", help="critical clearing time by bisection")
    sp.add_argument("case")
    sp.add_argument("--lo", type=float, required=True)
    sp.add_argument("--hi", type=float, required=True)
    sp.add_argument("--tol", type=float, default=1e-4)
    common(sp)
    sp.set_defaults(func=cmd_cct)

    sp = sub.add_parser("report", help="verdict summary and timing comparison")
    sp.add_argument("case")
    common(sp, pattern=True)
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("scenarios", help="list shipped scenarios")
    sp.set_defaults(func=cmd_scenarios)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TSAError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
