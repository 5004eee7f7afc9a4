import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsa.errors import AnalysisError
from tsa.frames import GroupPattern
from tsa.grouping import (
    MARGIN_DEFINITION,
    PatternCandidate,
    candidate_patterns,
    candidates_csv_rows,
    dominant_pattern,
    enumerate_patterns,
    evaluate_candidate,
    mod_count,
    pattern_count,
    rank_candidates,
    sys_angles_at,
)
from tsa.report import with_clear_time
from tsa.simulator import Trajectory, simulate


def brute_force_partitions(n):
    """Unordered two-set partitions by listing every subset and its complement."""
    machines = frozenset(range(n))
    seen = set()
    for r in range(1, n):
        for sub in itertools.combinations(range(n), r):
            s = frozenset(sub)
            seen.add(frozenset({s, machines - s}))
    return seen


def at_rest(angles, ids, inertia=None):
    n = len(angles)
    rows = np.array([angles, angles], float)
    return Trajectory(
        times=np.array([0.0, 1e-3]), angles=rows, speeds=np.zeros((2, n)), acc_powers=np.zeros((2, n)),
        clear_index=0, clear_acc_powers=np.zeros(n), ids=tuple(ids),
        inertia=np.ones(n) if inertia is None else np.asarray(inertia, float),
    )


@pytest.fixture(scope="module")
def long_clearing(wscc):
    return simulate(with_clear_time(wscc, 0.30), 1.5)


@pytest.mark.parametrize("n", range(2, 13))
def test_counts_agree_with_enumeration(n):
    assert mod_count(n) == pattern_count(n) == 2 ** (n - 1) - 1
    pats = enumerate_patterns(n)
    assert len(pats) == mod_count(n)
    as_sets = {frozenset({p.omega_cr, p.omega_ncr}) for p in pats}
    assert len(as_sets) == len(pats)
    if n <= 8:
        brute = brute_force_partitions(n)
        assert {frozenset(frozenset(int(i) for i in g) for g in s) for s in as_sets} == brute


def test_published_counts():
    assert mod_count(10) == pattern_count(10) == 511
    assert mod_count(2) == 1
    assert mod_count(5) == 15
    assert pattern_count(3) == 3
    assert pattern_count(6) == 31


@pytest.mark.parametrize("n", [1, 0, -3])
def test_counts_reject_small(n):
    with pytest.raises(AnalysisError):
        mod_count(n)
    with pytest.raises(AnalysisError):
        pattern_count(n)


def test_enumerate_three():
    got = {(p.omega_cr, p.omega_ncr) for p in enumerate_patterns(3)}
    assert got == {
        (frozenset({"1"}), frozenset({"0", "2"})),
        (frozenset({"2"}), frozenset({"0", "1"})),
        (frozenset({"1", "2"}), frozenset({"0"})),
    }


def test_enumerate_first_machine_in_ncr_and_no_complements():
    pats = enumerate_patterns(7)
    assert all("0" in p.omega_ncr for p in pats)
    keys = {(p.omega_cr, p.omega_ncr) for p in pats}
    assert not any((p.omega_ncr, p.omega_cr) in keys for p in pats)


@pytest.mark.parametrize("n", [1, 21])
def test_enumerate_range(n):
    with pytest.raises(AnalysisError):
        enumerate_patterns(n)


def test_candidate_single_dominant_gap():
    traj = at_rest([5.0, 4.9, 0.1], ["a", "b", "c"])
    (c,) = candidate_patterns(traj, k_max=1)
    assert c.pattern.omega_cr == {"a", "b"}
    assert c.gap_rad == pytest.approx(4.8)
    assert c.rank == 1


def test_candidate_equal_angles_deterministic():
    traj = at_rest([0.2, 0.2, 0.2], ["c", "a", "b"])
    cands = candidate_patterns(traj, k_max=3)
    assert [c.gap_rad for c in cands] == [0.0, 0.0]
    assert [c.critical_ids for c in cands] == [("b", "c"), ("c",)]
    assert cands == candidate_patterns(traj, k_max=3)


def test_candidate_two_comparable_gaps():
    # top machine alone versus bottom machine alone
    traj = at_rest([2.0, 1.0, 0.95, 0.9, -0.05], ["1", "2", "3", "4", "5"])
    c1, c2 = candidate_patterns(traj, k_max=2)
    assert c1.critical_ids == ("1",) and c1.gap_rad == pytest.approx(1.0)
    assert c2.pattern.omega_ncr == {"5"} and c2.gap_rad == pytest.approx(0.95)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=2, max_size=7), st.randoms(use_true_random=False))
def test_candidates_invariant_under_machine_order(angles, rnd):
    ids = [str(i + 1) for i in range(len(angles))]
    perm = list(range(len(angles)))
    rnd.shuffle(perm)
    a = candidate_patterns(at_rest(angles, ids), k_max=3)
    b = candidate_patterns(at_rest([angles[k] for k in perm], [ids[k] for k in perm]), k_max=3)
    assert [(c.pattern, c.gap_rad) for c in a] == [(c.pattern, pytest.approx(c.gap_rad, abs=1e-12)) for c in b]


def test_candidate_errors(long_clearing):
    with pytest.raises(AnalysisError, match="outside"):
        candidate_patterns(long_clearing, t_eval=9.0)
    with pytest.raises(AnalysisError):
        candidate_patterns(long_clearing, k_max=0)
    with pytest.raises(AnalysisError):
        PatternCandidate(GroupPattern.from_critical(["2"], long_clearing.ids), -0.1)


def test_sys_angles_interpolate(long_clearing):
    t = 0.5005
    got = sys_angles_at(long_clearing, t)
    assert set(got) == {"1", "2", "3"}
    M = long_clearing.inertia
    assert sum(M[k] * got[m] for k, m in enumerate(long_clearing.ids)) == pytest.approx(0.0, abs=1e-9)


def test_single_candidate_returned(long_clearing):
    only = PatternCandidate(GroupPattern.from_critical(["2", "3"], long_clearing.ids), 1.0)
    d = dominant_pattern(long_clearing, [only])
    assert d.pattern == only.pattern and d.rank == 1 and d.margin_eta is not None


def test_negative_margin_wins(long_clearing):
    ranked = rank_candidates(long_clearing, [PatternCandidate(p, 0.0) for p in enumerate_patterns(3, long_clearing.ids)])
    assert [c.rank for c in ranked] == [1, 2, 3]
    etas = [c.margin_eta for c in ranked]
    assert etas == sorted(etas)
    assert etas[0] < 0


def test_gap_candidates_reach_full_enumeration_minimum(long_clearing):
    full = rank_candidates(long_clearing, [PatternCandidate(p, 0.0) for p in enumerate_patterns(3, long_clearing.ids)])
    dom = dominant_pattern(long_clearing, candidate_patterns(long_clearing))
    assert dom.pattern == full[0].pattern
    assert dom.margin_eta == pytest.approx(full[0].margin_eta, abs=1e-12)
    # machine 1 carries the load side in this case
    assert "1" in dom.pattern.omega_ncr


def test_label_swap_invariance(long_clearing):
    for p in enumerate_patterns(3, long_clearing.ids):
        a = evaluate_candidate(long_clearing, PatternCandidate(p, 0.5))
        b = evaluate_candidate(long_clearing, PatternCandidate(p.swapped(), 0.5))
        assert a.pattern == b.pattern
        assert a.margin_eta == b.margin_eta
    cands = candidate_patterns(long_clearing)
    swapped = [PatternCandidate(c.pattern.swapped(), c.gap_rad) for c in cands]
    assert dominant_pattern(long_clearing, cands).pattern == dominant_pattern(long_clearing, swapped).pattern


def test_csv_rows(long_clearing):
    ranked = rank_candidates(long_clearing, candidate_patterns(long_clearing))
    rows = candidates_csv_rows(ranked)
    assert rows[0] == ["rank", "omega_cr", "omega_ncr", "gap_rad", "eta", "note"]
    assert [r[0] for r in rows[1:]] == [str(k) for k in range(1, len(ranked) + 1)]
    assert all(r[-1] == MARGIN_DEFINITION for r in rows[1:])
    assert all(math.isfinite(float(r[4])) for r in rows[1:])
