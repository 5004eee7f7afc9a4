"""End-to-end scenario runs, CSV/JSON exports, CCT search and timing comparison."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .errors import AnalysisError, TSAError
from .frames import (
    GroupPattern,
    RelativeMachineSeries,
    equivalent_series,
    id_sort_key,
    individual_series,
    inner_group_series,
    write_series_csv,
)
from .grouping import MARGIN_DEFINITION, PatternCandidate, candidate_patterns, candidates_csv_rows, rank_candidates
from .scenarios import load_scenarios
from .simulator import DEFAULT_DT, Trajectory, simulate, write_trajectory_csv
from .stability import (
    SystemVerdict,
    energy_ledger,
    first_dlp,
    original_system_unstable,
    swing_scan,
    verdicts,
)
from .system import Fault, SystemCase, load_case

DEFAULT_T_END = 5.0
DEFAULT_OUT_DIR = "tsa_out"
MIN_CCT_TOL = 1e-4

EXIT_STABLE = 0
EXIT_UNSTABLE = 10
EXIT_DIVERGENT = 11
EXIT_ERROR = 2


@dataclass(frozen=True)
class RunFlags:
    t_end: float = DEFAULT_T_END
    dt: float = DEFAULT_DT
    pattern: tuple[str, ...] | None = None   # critical ids; None selects automatically
    k_max: int = 3
    out_dir: Path | None = None
    export: bool = True


@dataclass(frozen=True)
class ScenarioResult:
    case_name: str
    pattern: GroupPattern
    verdict: SystemVerdict
    idlp_times: dict
    edlp_time: float | None
    igmdlp_times: dict
    candidates: tuple[PatternCandidate, ...] = ()
    cct: float | None = None
    artifacts: dict = field(default_factory=dict)

    @property
    def cct_text(self) -> str:
        return "not computed" if self.cct is None else f"{self.cct:.6f}"

    @property
    def exit_code(self) -> int:
        if not self.verdict.original_unstable:
            return EXIT_STABLE
        return EXIT_DIVERGENT if self.verdict.quality == "divergent" else EXIT_UNSTABLE


def output_dir(flags: RunFlags, case_name: str) -> Path:
    base = flags.out_dir or Path(os.environ.get("TSA_OUT_DIR", DEFAULT_OUT_DIR))
    path = Path(base) / case_name
    path.mkdir(parents=True, exist_ok=True)
    return path


def resolve_target(target: str | Path) -> tuple[SystemCase, RunFlags]:
    """A case file path, or the name of a shipped scenario with its own horizon and pattern."""
    path = Path(target)
    if not path.exists():
        for sc in load_scenarios():
            if sc.name == str(target):
                return sc.build(), RunFlags(t_end=sc.t_end, pattern=sc.pattern)
    return load_case(path), RunFlags()


def all_series(traj: Trajectory, pattern: GroupPattern) -> list[RelativeMachineSeries]:
    out = [individual_series(traj, m) for m in traj.ids]
    out += [equivalent_series(traj, pattern, w) for w in ("CR", "NCR")]
    out += [inner_group_series(traj, m, pattern) for m in traj.ids]
    return out


def _first_time(events) -> float | None:
    e = first_dlp(events)
    return None if e is None else float(e.time)


def analyze_trajectory(traj: Trajectory, flags: RunFlags) -> tuple[GroupPattern, tuple[PatternCandidate, ...], SystemVerdict]:
    ranked: tuple[PatternCandidate, ...] = ()
    if flags.pattern is None:
        ranked = tuple(rank_candidates(traj, candidate_patterns(traj, k_max=flags.k_max)))
        pattern = ranked[0].pattern
    else:
        pattern = GroupPattern.from_critical(flags.pattern, traj.ids)
        pattern.check(traj)
    return pattern, ranked, verdicts(traj, pattern)


def run_case(case: SystemCase, flags: RunFlags = RunFlags()) -> ScenarioResult:
    try:
        traj = simulate(case, flags.t_end, flags.dt)
        pattern, ranked, verdict = analyze_trajectory(traj, flags)
    except TSAError as exc:
        raise type(exc)(f"{case.name}: {exc}") from exc
    result = ScenarioResult(
        case_name=case.name,
        pattern=pattern,
        verdict=verdict,
        idlp_times={m: _first_time(ev) for m, ev in verdict.individual.items()},
        edlp_time=_first_time(verdict.equivalent["CR"]),
        igmdlp_times={m: _first_time(ev) for m, ev in verdict.inner.items()},
        candidates=ranked,
    )
    if flags.export:
        result = replace(result, artifacts=export_all(traj, result, output_dir(flags, case.name)))
    return result


def run_scenario(case_path: str | Path, flags: RunFlags | None = None, **overrides) -> ScenarioResult:
    """Run one case file or shipped scenario; keyword overrides patch the resolved flags."""
    case, defaults = resolve_target(case_path)
    return run_case(case, replace(flags or defaults, **overrides))


# ---------------------------------------------------------------------------
# exports


def _series_tag(s: RelativeMachineSeries) -> str:
    return f"{s.subject}-{s.reference}"


def write_ledger_csv(series: RelativeMachineSeries, path: Path) -> Path:
    ledger = energy_ledger(series)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "ke", "pe", "total"])
        for row in zip(ledger.times, ledger.ke, ledger.pe, ledger.total):
            w.writerow([f"{v:.9g}" for v in row])
    return path


def event_rows(traj: Trajectory, pattern: GroupPattern) -> list[list[str]]:
    rows = [["subject", "reference", "kind", "swing", "time_s", "delta_rel_rad", "residual_ke"]]
    for s in all_series(traj, pattern):
        for e in swing_scan(s):
            rows.append([
                s.subject, s.reference, e.kind, str(e.swing_index),
                f"{e.time:.9g}", f"{e.delta_rel:.9g}", f"{e.residual_ke:.9g}",
            ])
    return rows


def verdict_summary(result: ScenarioResult) -> dict:
    v = result.verdict
    first = v.first_idlp
    return {
        "case": result.case_name,
        "omega_cr": sorted(result.pattern.omega_cr, key=id_sort_key),
        "omega_ncr": sorted(result.pattern.omega_ncr, key=id_sort_key),
        "original_system": {
            "unstable": v.original_unstable,
            "first_idlp_machine": first[0] if first else None,
            "first_idlp_time": float(first[1].time) if first else None,
        },
        "equivalent_system": {"unstable": v.equivalent_unstable, "edlp_time": result.edlp_time},
        "inner_group": {"quality": v.quality, "igmdlp_times": result.igmdlp_times},
        "ordering": [
            {
                "machine": o.machine,
                "group": o.group,
                "t_igmdlp": o.t_igmdlp,
                "t_edlp": o.t_edlp,
                "t_idlp": o.t_idlp,
                "igmdlp_after_edlp": o.after_edlp,
                "igmdlp_after_idlp": o.after_idlp,
                "force_product": o.force_product,
                "force_product_positive": o.force_sign_ok,
            }
            for o in v.ordering
        ],
        "cct": result.cct_text,
        "margin": MARGIN_DEFINITION,
    }


def _write_rows(path: Path, rows) -> Path:
    with path.open("w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    return path


def export_all(traj: Trajectory, result: ScenarioResult, out: Path) -> dict:
    arts = {"trajectory": write_trajectory_csv(traj, out / "trajectory.csv")}
    series_dir = out / "series"
    series_dir.mkdir(exist_ok=True)
    for s in all_series(traj, result.pattern):
        tag = _series_tag(s)
        arts[f"series:{tag}"] = write_series_csv(s, series_dir / f"{tag}.csv")
        arts[f"ledger:{tag}"] = write_ledger_csv(s, series_dir / f"{tag}.ledger.csv")
    arts["events"] = _write_rows(out / "events.csv", event_rows(traj, result.pattern))
    if result.candidates:
        arts["patterns"] = _write_rows(out / "patterns.csv", candidates_csv_rows(result.candidates))
    path = out / "verdict.json"
    path.write_text(json.dumps(verdict_summary(result), indent=2, sort_keys=True) + "\n")
    arts["verdict"] = path
    return arts


# ---------------------------------------------------------------------------
# critical clearing time


@dataclass(frozen=True)
class CctResult:
    cct: float
    lo: float
    hi: float
    iterations: int


def with_clear_time(case: SystemCase, clear_time: float) -> SystemCase:
    return replace(case, fault=Fault(case.fault.bus, clear_time))


def unstable_at(case: SystemCase, clear_time: float, t_end: float = 3.0, dt: float = DEFAULT_DT) -> bool:
    """Machine-by-machine verdict for one clearing time."""
    return original_system_unstable(simulate(with_clear_time(case, clear_time), t_end, dt))


def cct_search(case: SystemCase, t_lo: float, t_hi: float, tol_s: float = MIN_CCT_TOL,
               t_end: float = 3.0, dt: float = DEFAULT_DT) -> CctResult:
    """Bisection on clearing time until the stable/unstable bracket is at most ``tol_s`` wide."""
    if tol_s < MIN_CCT_TOL:
        raise AnalysisError(f"tol_s must be at least {MIN_CCT_TOL}")
    if not 0 < t_lo < t_hi:
        raise AnalysisError("invalid CCT bracket: need 0 < lo < hi")
    if unstable_at(case, t_lo, t_end, dt) or not unstable_at(case, t_hi, t_end, dt):
        raise AnalysisError("invalid CCT bracket")
    lo, hi, it = t_lo, t_hi, 0
    while hi - lo > tol_s:
        mid = 0.5 * (lo + hi)
        if unstable_at(case, mid, t_end, dt):
            hi = mid
        else:
            lo = mid
        it += 1
    return CctResult(0.5 * (lo + hi), lo, hi, it)


def cct(case: SystemCase, t_lo: float, t_hi: float, tol_s: float = MIN_CCT_TOL, **kw) -> float:
    return cct_search(case, t_lo, t_hi, tol_s, **kw).cct


# ---------------------------------------------------------------------------
# timing comparison


@dataclass(frozen=True)
class TimingReport:
    rows: tuple[tuple[str, float], ...]
    checks: dict
    flags: tuple[str, ...] = ()

    def render(self) -> str:
        if not self.rows:
            return "no liberation events\n"
        lines = ["event,time_s"] + [f"{label},{t:.6f}" for label, t in self.rows]
        lines += [f"check,{name},{str(ok).lower()}" for name, ok in self.checks.items()]
        lines += [f"flag,{f}" for f in self.flags]
        return "\n".join(lines) + "\n"


def timing_report(result: ScenarioResult) -> TimingReport:
    """Earliest IDLP, EDLP, last critical-group IDLP and IGMDLPs with checked ordering claims."""
    idlps = {m: t for m, t in result.idlp_times.items() if t is not None}
    edlp = result.edlp_time
    if not idlps and edlp is None:
        return TimingReport((), {})
    rows: list[tuple[str, float]] = []
    checks: dict[str, bool] = {}
    flags: list[str] = []
    earliest = min(idlps.items(), key=lambda kv: (kv[1], id_sort_key(kv[0]))) if idlps else None
    cr_idlps = {m: t for m, t in idlps.items() if m in result.pattern.omega_cr}
    last_cr = max(cr_idlps.items(), key=lambda kv: (kv[1], id_sort_key(kv[0]))) if cr_idlps else None
    if earliest:
        rows.append((f"IDLP_{earliest[0]} (earliest)", earliest[1]))
    if edlp is not None:
        rows.append(("EDLP_CR", edlp))
    if last_cr:
        rows.append((f"IDLP_{last_cr[0]} (last in critical group)", last_cr[1]))
    for m in sorted(result.igmdlp_times, key=id_sort_key):
        t = result.igmdlp_times[m]
        if t is not None:
            rows.append((f"IGMDLP_{m}", t))
    if earliest and edlp is not None:
        checks["earliest_idlp_le_edlp"] = earliest[1] <= edlp
    if last_cr and edlp is not None:
        checks["edlp_le_last_critical_idlp"] = edlp <= last_cr[1]
    for m, t in result.igmdlp_times.items():
        if t is not None:
            checks[f"igmdlp_{m}_ge_edlp"] = edlp is not None and t >= edlp
    if len(result.pattern.omega_cr) == 1 and edlp is not None:
        (lone,) = result.pattern.omega_cr
        if idlps.get(lone) is not None and math.isclose(idlps[lone], edlp, rel_tol=0, abs_tol=1e-12):
            flags.append(f"coincident: EDLP_CR = IDLP_{lone}")
    return TimingReport(tuple(rows), checks, tuple(flags))


def _run_with_overrides(target: str, overrides: dict) -> ScenarioResult:
    return run_scenario(target, **overrides)


def run_many(targets: Sequence[str], overrides: dict, jobs: int = 1) -> list[ScenarioResult]:
    """Independent runs, optionally spread over worker processes; order follows ``targets``."""
    if jobs <= 1 or len(targets) <= 1:
        return [run_scenario(t, **overrides) for t in targets]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_with_overrides, targets, [overrides] * len(targets)))
