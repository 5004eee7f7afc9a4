"""Group-separation patterns: counting, enumeration, candidates and ranking.

The margin used to rank candidates, ``eta``, is a local definition (see
:func:`tsa.stability.eac_margin`); outputs built on it carry the flag
``MARGIN_DEFINITION``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import AnalysisError
from .frames import GroupPattern, equivalent_series, id_sort_key, individual_series
from .simulator import Trajectory
from .stability import eac_margin

MARGIN_DEFINITION = "definition: artifact"
MAX_ENUMERATION = 20


def mod_count(n: int) -> int:
    """Number of possible modes of disturbance: nonempty proper unstable sets up to swap."""
    if n < 2:
        raise AnalysisError("machine count must be at least 2")
    return 2 ** (n - 1) - 1


def pattern_count(n: int) -> int:
    """Number of unordered two-set partitions of n machines."""
    if n < 2:
        raise AnalysisError("machine count must be at least 2")
    return (2**n - 2) // 2


def enumerate_patterns(n: int, ids: Sequence | None = None) -> list[GroupPattern]:
    """All two-set partitions; the set holding the first machine is labelled NCR."""
    if not 2 <= n <= MAX_ENUMERATION:
        raise AnalysisError(f"machine count must be in 2..{MAX_ENUMERATION}, got {n}")
    ids = [str(i) for i in (range(n) if ids is None else ids)]
    if len(ids) != n:
        raise AnalysisError("ids length does not match n")
    out = []
    for mask in range(1, 2 ** (n - 1)):
        cr = {ids[k + 1] for k in range(n - 1) if mask >> k & 1}
        out.append(GroupPattern.from_critical(cr, ids))
    return out


@dataclass(frozen=True)
class PatternCandidate:
    pattern: GroupPattern
    gap_rad: float
    margin_eta: float | None = None
    rank: int = 0

    def __post_init__(self):
        if not self.gap_rad >= 0:
            raise AnalysisError("gap_rad must be nonnegative")

    @property
    def critical_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.pattern.omega_cr, key=id_sort_key))


def _interp_row(traj: Trajectory, values: np.ndarray, t: float) -> float:
    return float(np.interp(t, traj.times, values))


def sys_angles_at(traj: Trajectory, t_eval: float) -> dict[str, float]:
    if not traj.times[0] <= t_eval <= traj.times[-1]:
        raise AnalysisError(f"t_eval {t_eval} outside trajectory range")
    return {mid: _interp_row(traj, individual_series(traj, mid).delta_rel, t_eval) for mid in traj.ids}


def candidate_patterns(traj: Trajectory, t_eval: float | None = None, k_max: int = 3) -> list[PatternCandidate]:
    """Cut the angle-sorted machine list at its ``k_max`` widest gaps.

    Machines above a cut form the critical group.  Candidates come back in
    descending gap order; equal gaps keep the lower cut first.
    """
    if k_max < 1:
        raise AnalysisError("k_max must be at least 1")
    if len(traj.ids) < 2:
        raise AnalysisError("at least two machines are needed")
    t_eval = float(traj.times[-1]) if t_eval is None else t_eval
    angles = sys_angles_at(traj, t_eval)
    order = sorted(angles, key=lambda m: (angles[m], id_sort_key(m)))
    gaps = [angles[order[k + 1]] - angles[order[k]] for k in range(len(order) - 1)]
    cuts = sorted(range(len(gaps)), key=lambda k: (-gaps[k], k))[:k_max]
    return [
        PatternCandidate(GroupPattern.from_critical(order[k + 1:], traj.ids), max(gaps[k], 0.0), None, rank)
        for rank, k in enumerate(cuts, start=1)
    ]


def _advanced_first(traj: Trajectory, pattern: GroupPattern) -> GroupPattern:
    # critical group = the side whose equivalent angle leads at the end of the record
    lead = equivalent_series(traj, pattern, "CR").delta_rel[-1]
    return pattern.swapped() if lead < 0 else pattern


def evaluate_candidate(traj: Trajectory, candidate: PatternCandidate) -> PatternCandidate:
    pattern = _advanced_first(traj, candidate.pattern)
    eta = eac_margin(equivalent_series(traj, pattern, "CR"))
    return replace(candidate, pattern=pattern, margin_eta=eta)


def _severity_key(c: PatternCandidate):
    return (c.margin_eta, -c.gap_rad, [id_sort_key(i) for i in c.critical_ids])


def rank_candidates(traj: Trajectory, candidates: Sequence[PatternCandidate]) -> list[PatternCandidate]:
    """Evaluate every candidate and order by severity; rank 1 is dominant."""
    if not candidates:
        raise AnalysisError("no candidates given")
    scored = sorted((evaluate_candidate(traj, c) for c in candidates), key=_severity_key)
    return [replace(c, rank=r) for r, c in enumerate(scored, start=1)]


def dominant_pattern(traj: Trajectory, candidates: Sequence[PatternCandidate]) -> PatternCandidate:
    """Minimal margin, then larger gap, then the lexicographically first critical set."""
    return rank_candidates(traj, candidates)[0]


def candidates_csv_rows(ranked: Sequence[PatternCandidate]) -> list[list[str]]:
    rows = [["rank", "omega_cr", "omega_ncr", "gap_rad", "eta", "note"]]
    for c in ranked:
        eta = "" if c.margin_eta is None else ("inf" if math.isinf(c.margin_eta) else f"{c.margin_eta:.9g}")
        rows.append([
            str(c.rank),
            " ".join(c.critical_ids),
            " ".join(sorted(c.pattern.omega_ncr, key=id_sort_key)),
            f"{c.gap_rad:.9g}",
            eta,
            MARGIN_DEFINITION,
        ])
    return rows
