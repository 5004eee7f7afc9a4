"""Energy bookkeeping, equal-area quantities and liberation-point detection.

Every function here accepts any :class:`~tsa.frames.RelativeMachineSeries`,
so the same code characterises individual machines (I-SYS), equivalent
machines (CR-SYS / NCR-SYS) and inner-group machines (I-CR / I-NCR).

Potential energy is the path integral of ``-f_rel`` along ``delta_rel``,
starting from the prefault relative angle.  It is accumulated separately on
the fault-on and postfault segments so the force discontinuity at clearing is
never smeared across a step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .errors import AnalysisError
from .frames import (
    GroupPattern,
    RelativeMachineSeries,
    equivalent_series,
    individual_series,
    inner_group_series,
)
from .simulator import Trajectory, refine_crossing

OMEGA_TOL = 1e-6
MAX_SWINGS = 50
NOT_CRITICAL = math.inf

DLP = "DLP"
DSP = "DSP"


# ---------------------------------------------------------------------------
# Kimbark curve


@dataclass(frozen=True, eq=False)
class KimbarkCurve:
    points: np.ndarray           # (samples, 2): delta_rel, f_rel
    swing_marks: tuple[int, ...]


def _sign_changes(w: np.ndarray) -> list[int]:
    marks = []
    last = 0
    for k, s in enumerate(np.sign(w)):
        if s == 0:
            continue
        if last and s != last:
            marks.append(k)
        last = s
    return marks


def kimbark(series: RelativeMachineSeries) -> KimbarkCurve:
    if series.times.size == 0:
        raise AnalysisError("empty series")
    pts = np.column_stack((series.delta_rel, series.f_rel))
    pts.flags.writeable = False
    return KimbarkCurve(pts, tuple(_sign_changes(series.omega_rel)))


# ---------------------------------------------------------------------------
# quadrature


@lru_cache(maxsize=None)
def _product_weights(p: int) -> np.ndarray:
    """W[j, a, b] = integral over [j, j+1] of L_a(s) * L_b'(s) ds, nodes 0..p-1."""
    nodes = range(p)
    basis = []
    for a in nodes:
        poly = Polynomial([1.0])
        for m in nodes:
            if m != a:
                poly = poly * Polynomial([-m, 1.0]) / (a - m)
        basis.append(poly)
    W = np.empty((p - 1, p, p))
    for j in range(p - 1):
        for a in range(p):
            for b in range(p):
                prim = (basis[a] * basis[b].deriv()).integ()
                W[j, a, b] = prim(j + 1) - prim(j)
    return W


def path_integral(f: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Cumulative integral of f dx along a sampled path.

    Both f and x are interpolated by cubics through four neighbouring samples
    (sample index as the curve parameter) and the product integrated exactly
    on each interval.  Fewer than four samples fall back to lower degree; two
    samples give the trapezoid rule.
    """
    f = np.asarray(f, dtype=float)
    x = np.asarray(x, dtype=float)
    m = f.size
    out = np.zeros(m)
    if m < 2:
        return out
    p = min(4, m)
    W = _product_weights(p)
    k = np.arange(m - 1)
    start = np.clip(k - 1, 0, m - p)
    idx = start[:, None] + np.arange(p)
    inc = np.einsum("ka,kab,kb->k", f[idx], W[k - start], x[idx])
    out[1:] = np.cumsum(inc)
    return out


# ---------------------------------------------------------------------------
# events


@dataclass(frozen=True)
class SwingEvent:
    kind: str
    time: float
    delta_rel: float
    residual_ke: float
    swing_index: int
    sample: int = field(default=0, compare=False)  # index of the sample closing the step

    def __post_init__(self):
        for name in ("time", "delta_rel", "residual_ke"):
            object.__setattr__(self, name, float(getattr(self, name)))


def _clear_index(series: RelativeMachineSeries, clear_time: float | None) -> int:
    if clear_time is None:
        return series.clear_index
    t = series.times
    if not t[0] <= clear_time <= t[-1]:
        raise AnalysisError(f"clear_time {clear_time} outside series range [{t[0]}, {t[-1]}]")
    if abs(clear_time - series.clear_time) > 1e-9:
        raise AnalysisError(f"clear_time {clear_time} does not match the series clearing sample {series.clear_time}")
    return series.clear_index


def _lerp(v: np.ndarray, k: int, t0: float, t1: float, t: float) -> float:
    if t1 == t0:
        return float(v[k])
    theta = (t - t0) / (t1 - t0)
    return float(v[k - 1] + theta * (v[k] - v[k - 1]))


def swing_scan(series: RelativeMachineSeries, clear_time: float | None = None,
               omega_tol: float = OMEGA_TOL, max_swings: int = MAX_SWINGS) -> list[SwingEvent]:
    """Detect DSPs and the first DLP on the postfault segment.

    Within a swing of direction ``s = sign(omega_rel)`` a DLP is the point
    where ``s * f_rel`` returns from negative to non-negative while the
    machine still moves; a DSP is where ``omega_rel`` reaches zero first.
    Scanning continues across DSPs and stops at the first DLP.
    """
    c = _clear_index(series, clear_time)
    t, w, f, d = series.times, series.omega_rel, series.f_rel, series.delta_rel
    ke = 0.5 * series.inertia * w * w
    events: list[SwingEvent] = []
    swing = 1
    s = 0
    for k in range(c, t.size):
        if s == 0:
            if abs(w[k]) > omega_tol:
                s = 1 if w[k] > 0 else -1
            continue
        wa, wb = s * w[k - 1], s * w[k]
        fa, fb = s * f[k - 1], s * f[k]
        t_dsp = refine_crossing(t[k - 1], wa, t[k], wb) if wb <= 0 else None
        t_dlp = refine_crossing(t[k - 1], fa, t[k], fb) if (fa < 0 <= fb) else None
        if t_dlp is not None and (t_dsp is None or t_dlp < t_dsp):
            if abs(_lerp(w, k, t[k - 1], t[k], t_dlp)) > omega_tol:
                events.append(SwingEvent(
                    DLP, t_dlp, _lerp(d, k, t[k - 1], t[k], t_dlp),
                    _lerp(ke, k, t[k - 1], t[k], t_dlp), swing, k,
                ))
                break
        if t_dsp is not None:
            events.append(SwingEvent(DSP, t_dsp, _lerp(d, k, t[k - 1], t[k], t_dsp), 0.0, swing, k))
            swing += 1
            if swing > max_swings:
                break
            s = -s if wb < 0 else 0
    return events


def first_dlp(events: Sequence[SwingEvent]) -> SwingEvent | None:
    return next((e for e in events if e.kind == DLP), None)


# ---------------------------------------------------------------------------
# energy


@dataclass(frozen=True, eq=False)
class EnergyLedger:
    times: np.ndarray
    ke: np.ndarray
    pe: np.ndarray
    total: np.ndarray
    ref_point: float
    clear_index: int
    a_acc: float
    a_dec: float | None
    mpp: SwingEvent | None

    def at(self, values: np.ndarray, event: SwingEvent) -> float:
        k = event.sample
        return _lerp(values, k, self.times[k - 1], self.times[k], event.time)

    def pe_at(self, event: SwingEvent) -> float:
        return self.at(self.pe, event)

    def ke_at(self, event: SwingEvent) -> float:
        return self.at(self.ke, event)

    def postfault_drift(self) -> float:
        """max |total(t) - total(t_clear)| over the postfault segment."""
        seg = self.total[self.clear_index:]
        return float(np.max(np.abs(seg - seg[0])))

    def identity_residual(self, event: SwingEvent) -> float:
        """|KE_residual - (A_acc - A_dec)| at a liberation point."""
        a_dec = self.pe_at(event) - self.pe[self.clear_index]
        return abs(event.residual_ke - (self.a_acc - a_dec))


def potential_energy(series: RelativeMachineSeries, clear_index: int | None = None) -> np.ndarray:
    c = series.clear_index if clear_index is None else clear_index
    d, f = series.delta_rel, series.f_rel
    pe = np.empty(d.size)
    f_on = np.array(f[: c + 1])
    f_on[c] = series.f_clear_left
    pe[: c + 1] = -path_integral(f_on, d[: c + 1])
    pe[c:] = pe[c] - path_integral(f[c:], d[c:])
    return pe


def energy_ledger(series: RelativeMachineSeries, clear_time: float | None = None,
                  events: Sequence[SwingEvent] | None = None) -> EnergyLedger:
    c = _clear_index(series, clear_time)
    ke = 0.5 * series.inertia * series.omega_rel**2
    pe = potential_energy(series, c)
    if events is None:
        events = swing_scan(series, clear_time)
    mpp = next((e for e in events if e.swing_index == 1), None)
    ledger = EnergyLedger(
        times=series.times, ke=ke, pe=pe, total=ke + pe,
        ref_point=float(series.delta_rel[0]), clear_index=c,
        a_acc=float(ke[c]), a_dec=None, mpp=mpp,
    )
    if mpp is not None:
        object.__setattr__(ledger, "a_dec", ledger.pe_at(mpp) - float(pe[c]))
    return ledger


def eac_margin(series: RelativeMachineSeries, clear_time: float | None = None) -> float:
    """(A_dec,available - A_acc) / A_acc on the first postfault swing.

    Returns ``NOT_CRITICAL`` (+inf) when the series carries no kinetic energy
    at clearing.  A stable first swing ends on a DSP where the available
    deceleration area equals A_acc up to quadrature error; that value is
    clamped at zero so a negative margin always means a first-swing DLP.
    """
    events = swing_scan(series, clear_time)
    ledger = energy_ledger(series, clear_time, events)
    a_acc = ledger.a_acc
    if a_acc <= 0.5 * series.inertia * OMEGA_TOL**2:
        return NOT_CRITICAL
    if ledger.mpp is None:
        return 0.0
    eta = (ledger.a_dec - a_acc) / a_acc
    if ledger.mpp.kind == DSP:
        eta = max(eta, 0.0)
    return eta


# ---------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class OrderingEntry:
    machine: str
    group: str
    t_igmdlp: float
    t_edlp: float | None
    t_idlp: float | None
    after_edlp: bool
    after_idlp: bool
    force_product: float

    @property
    def force_sign_ok(self) -> bool:
        return bool(self.force_product > 0)


@dataclass(frozen=True)
class SystemVerdict:
    pattern: GroupPattern
    individual: dict
    equivalent: dict
    inner: dict
    ordering: tuple[OrderingEntry, ...]

    @property
    def first_idlp(self) -> tuple[str, SwingEvent] | None:
        hits = [(mid, first_dlp(ev)) for mid, ev in self.individual.items()]
        hits = [(mid, e) for mid, e in hits if e is not None]
        return min(hits, key=lambda h: (h[1].time, h[0])) if hits else None

    @property
    def original_unstable(self) -> bool:
        return self.first_idlp is not None

    @property
    def edlp(self) -> SwingEvent | None:
        return first_dlp(self.equivalent["CR"])

    @property
    def equivalent_unstable(self) -> bool:
        return self.edlp is not None

    def idlp(self, machine_id) -> SwingEvent | None:
        return first_dlp(self.individual[str(machine_id)])

    def igmdlp(self, machine_id) -> SwingEvent | None:
        return first_dlp(self.inner[str(machine_id)])

    @property
    def quality(self) -> str:
        return "divergent" if any(first_dlp(ev) for ev in self.inner.values()) else "close"

    @property
    def ordering_ok(self) -> bool:
        return all(o.after_edlp and o.after_idlp and o.force_sign_ok for o in self.ordering)


def _value_at(values: np.ndarray, times: np.ndarray, event: SwingEvent) -> float:
    k = event.sample
    return _lerp(values, k, times[k - 1], times[k], event.time)


def verdicts(traj: Trajectory, pattern: GroupPattern) -> SystemVerdict:
    pattern.check(traj)
    ind_series = {mid: individual_series(traj, mid) for mid in traj.ids}
    eq_series = {w: equivalent_series(traj, pattern, w) for w in ("CR", "NCR")}
    individual = {mid: swing_scan(s) for mid, s in ind_series.items()}
    equivalent = {w: swing_scan(s) for w, s in eq_series.items()}
    inner = {mid: swing_scan(inner_group_series(traj, mid, pattern)) for mid in traj.ids}

    edlp = first_dlp(equivalent["CR"])
    ordering = []
    for mid in traj.ids:
        ig = first_dlp(inner[mid])
        if ig is None:
            continue
        grp = pattern.group_of(mid)
        idlp = first_dlp(individual[mid])
        f_k = _value_at(ind_series[mid].f_rel, traj.times, ig)
        f_g = _value_at(eq_series[grp].f_rel, traj.times, ig)
        ordering.append(OrderingEntry(
            machine=mid,
            group=grp,
            t_igmdlp=ig.time,
            t_edlp=edlp.time if edlp else None,
            t_idlp=idlp.time if idlp else None,
            after_edlp=bool(edlp is not None and ig.time >= edlp.time),
            after_idlp=bool(idlp is not None and ig.time >= idlp.time),
            force_product=f_k * f_g,
        ))
    return SystemVerdict(pattern, individual, equivalent, inner, tuple(ordering))


def original_system_unstable(traj: Trajectory) -> bool:
    """Machine-by-machine rule: unstable as soon as any I-SYS series liberates."""
    return any(first_dlp(swing_scan(individual_series(traj, mid))) for mid in traj.ids)
