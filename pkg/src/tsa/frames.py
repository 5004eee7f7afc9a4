"""Reference-frame transformations of an absolute trajectory.

Everything here post-processes a :class:`~tsa.simulator.Trajectory`; nothing
is re-integrated.  Three kinds of relative series come out:

* individual machines in the COI-SYS frame (I-SYS),
* equivalent machines of a group in the COI-SYS frame (CR-SYS / NCR-SYS),
* inner-group machines relative to their own group's equivalent (I-CR / I-NCR).

All of them obey ``M * d(omega_rel)/dt = f_rel`` when damping is zero, which
is what lets the stability module treat them uniformly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import AnalysisError
from .simulator import Trajectory

FRAME_TOL = 1e-9


def id_sort_key(machine_id) -> tuple:
    """Numeric ids sort numerically, others lexically after them."""
    text = str(machine_id)
    try:
        return (0, float(text), text)
    except ValueError:
        return (1, 0.0, text)


def _frozen(a) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GroupPattern:
    """Two-set partition of the machines into the critical and non-critical group."""

    omega_cr: frozenset
    omega_ncr: frozenset

    def __post_init__(self):
        cr = frozenset(str(i) for i in self.omega_cr)
        ncr = frozenset(str(i) for i in self.omega_ncr)
        if not cr or not ncr:
            raise AnalysisError("invalid pattern: both groups must be nonempty")
        if cr & ncr:
            raise AnalysisError(f"invalid pattern: groups overlap on {sorted(cr & ncr)}")
        object.__setattr__(self, "omega_cr", cr)
        object.__setattr__(self, "omega_ncr", ncr)

    @classmethod
    def from_critical(cls, critical: Iterable, ids: Sequence) -> "GroupPattern":
        cr = {str(i) for i in critical}
        return cls(frozenset(cr), frozenset(str(i) for i in ids) - cr)

    @property
    def machines(self) -> frozenset:
        return self.omega_cr | self.omega_ncr

    def group(self, which: str) -> frozenset:
        if which == "CR":
            return self.omega_cr
        if which == "NCR":
            return self.omega_ncr
        raise AnalysisError(f"group must be 'CR' or 'NCR', not {which!r}")

    def group_of(self, machine_id) -> str:
        mid = str(machine_id)
        if mid in self.omega_cr:
            return "CR"
        if mid in self.omega_ncr:
            return "NCR"
        raise AnalysisError(f"machine {mid} is not in the pattern")

    def swapped(self) -> "GroupPattern":
        return GroupPattern(self.omega_ncr, self.omega_cr)

    def check(self, traj: Trajectory):
        if self.machines != set(traj.ids):
            raise AnalysisError("pattern does not cover exactly the trajectory's machines")


@dataclass(frozen=True, eq=False)
class RelativeMachineSeries:
    """One machine's (delta, omega, f) history in a relative frame.

    ``f_clear_left`` is the fault-on value of ``f_rel`` at ``clear_index``;
    ``f_rel`` itself carries the postfault value there.
    """

    subject: str
    reference: str
    times: np.ndarray
    delta_rel: np.ndarray
    omega_rel: np.ndarray
    f_rel: np.ndarray
    inertia: float
    clear_index: int
    f_clear_left: float

    def __post_init__(self):
        for name in ("times", "delta_rel", "omega_rel", "f_rel"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        shape = self.times.shape
        if not (self.delta_rel.shape == self.omega_rel.shape == self.f_rel.shape == shape):
            raise AnalysisError("series arrays must be congruent")
        if not self.inertia > 0:
            raise AnalysisError("series inertia must be positive")

    @property
    def clear_time(self) -> float:
        return float(self.times[self.clear_index])

    def negated(self) -> "RelativeMachineSeries":
        return RelativeMachineSeries(
            self.subject, self.reference, self.times, -self.delta_rel, -self.omega_rel,
            -self.f_rel, self.inertia, self.clear_index, -self.f_clear_left,
        )


@dataclass(frozen=True, eq=False)
class CoiSeries:
    delta: np.ndarray
    omega: np.ndarray
    f: np.ndarray
    f_clear_left: float
    inertia: float


def _columns(traj: Trajectory, members) -> list[int]:
    members = [str(m) for m in members]
    if not members:
        raise AnalysisError("members must be nonempty")
    return sorted({traj.index(m) for m in members})


def coi_series(traj: Trajectory, members) -> CoiSeries:
    """Inertia-weighted angle and speed and summed force of a machine set."""
    cols = _columns(traj, members)
    if len(cols) == 1:
        # exact pass-through keeps singleton groups bit-identical to their machine
        k = cols[0]
        return CoiSeries(
            traj.angles[:, k], traj.speeds[:, k], traj.acc_powers[:, k],
            float(traj.clear_acc_powers[k]), float(traj.inertia[k]),
        )
    M = traj.inertia[cols]
    Mt = float(M.sum())
    return CoiSeries(
        traj.angles[:, cols] @ M / Mt,
        traj.speeds[:, cols] @ M / Mt,
        traj.acc_powers[:, cols].sum(axis=1),
        float(traj.clear_acc_powers[cols].sum()),
        Mt,
    )


def _sys_forces(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """f_{i-SYS} for every machine, as (samples x machines) and the clear-left vector."""
    M = traj.inertia
    share = M / M.sum()
    f = traj.acc_powers - np.outer(traj.acc_powers.sum(axis=1), share)
    f_left = traj.clear_acc_powers - traj.clear_acc_powers.sum() * share
    return f, f_left


def individual_series(traj: Trajectory, machine_id) -> RelativeMachineSeries:
    k = traj.index(machine_id)
    sys = coi_series(traj, traj.ids)
    f, f_left = _sys_forces(traj)
    return RelativeMachineSeries(
        subject=traj.ids[k],
        reference="SYS",
        times=traj.times,
        delta_rel=traj.angles[:, k] - sys.delta,
        omega_rel=traj.speeds[:, k] - sys.omega,
        f_rel=f[:, k],
        inertia=float(traj.inertia[k]),
        clear_index=traj.clear_index,
        f_clear_left=float(f_left[k]),
    )


def equivalent_series(traj: Trajectory, pattern: GroupPattern, which: str) -> RelativeMachineSeries:
    """Machine-CR (or Machine-NCR) in the COI-SYS frame."""
    pattern.check(traj)
    members = pattern.group(which)
    cols = _columns(traj, members)
    grp = coi_series(traj, members)
    sys = coi_series(traj, traj.ids)
    f, f_left = _sys_forces(traj)
    return RelativeMachineSeries(
        subject=which,
        reference="SYS",
        times=traj.times,
        delta_rel=grp.delta - sys.delta,
        omega_rel=grp.omega - sys.omega,
        f_rel=f[:, cols].sum(axis=1),
        inertia=grp.inertia,
        clear_index=traj.clear_index,
        f_clear_left=float(f_left[cols].sum()),
    )


def _pairwise_force(f_sys: np.ndarray, M: np.ndarray, i: int) -> np.ndarray:
    # f_i - (M_i/M_G) sum_j f_j, written as sum_{j != i} (M_j f_i - M_i f_j) / M_G
    # so that a two-member group yields exactly antisymmetric forces.
    Mg = M.sum()
    acc = np.zeros(f_sys.shape[:-1])
    for j in range(M.size):
        if j != i:
            acc = acc + (M[j] * f_sys[..., i] - M[i] * f_sys[..., j])
    return acc / Mg


def inner_group_series(traj: Trajectory, machine_id, pattern: GroupPattern) -> RelativeMachineSeries:
    """Machine ``machine_id`` relative to the equivalent machine of its own group."""
    pattern.check(traj)
    which = pattern.group_of(machine_id)
    mid = str(machine_id)
    k = traj.index(mid)
    cols = _columns(traj, pattern.group(which))
    grp = coi_series(traj, pattern.group(which))
    f, f_left = _sys_forces(traj)
    local = cols.index(k)
    M = traj.inertia[cols]
    return RelativeMachineSeries(
        subject=mid,
        reference=which,
        times=traj.times,
        delta_rel=traj.angles[:, k] - grp.delta,
        omega_rel=traj.speeds[:, k] - grp.omega,
        f_rel=_pairwise_force(f[:, cols], M, local),
        inertia=float(traj.inertia[k]),
        clear_index=traj.clear_index,
        f_clear_left=float(_pairwise_force(f_left[cols], M, local)),
    )


@dataclass(frozen=True)
class FrameIdentityReport:
    delta_residual: float
    omega_residual: float
    f_residual: float
    tol: float = FRAME_TOL

    @property
    def ok(self) -> bool:
        return max(self.delta_residual, self.omega_residual, self.f_residual) <= self.tol


def frame_identity_report(series_set: Sequence[RelativeMachineSeries], tol: float = FRAME_TOL) -> FrameIdentityReport:
    """Worst-sample residuals of sum M_i d_i, sum M_i w_i and sum f_i over one group."""
    if not series_set:
        raise AnalysisError("no series given")
    ref = series_set[0]
    if len({s.reference for s in series_set}) != 1:
        raise AnalysisError("series belong to different reference frames")
    for s in series_set[1:]:
        if s.times.shape != ref.times.shape or not np.array_equal(s.times, ref.times):
            raise AnalysisError("mismatched sampling grids")
    sd = sum(s.inertia * s.delta_rel for s in series_set)
    sw = sum(s.inertia * s.omega_rel for s in series_set)
    sf = sum(s.f_rel for s in series_set)
    return FrameIdentityReport(
        float(np.max(np.abs(sd))), float(np.max(np.abs(sw))), float(np.max(np.abs(sf))), tol
    )


def write_series_csv(series: RelativeMachineSeries, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# subject={series.subject} reference={series.reference} inertia={series.inertia:.9g}\n")
        w = csv.writer(fh)
        w.writerow(["t", "delta_rel", "omega_rel", "f_rel"])
        for row in zip(series.times, series.delta_rel, series.omega_rel, series.f_rel):
            w.writerow([f"{v:.9g}" for v in row])
    return path
