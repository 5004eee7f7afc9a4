"""Fixed-step RK4 integration of the absolute-frame swing equations."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AnalysisError, SimulationError
from .system import SystemCase, accelerating_power, prefault_equilibrium

DEFAULT_DT = 1e-3


def _frozen(a) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Dense absolute-frame solution.

    ``acc_powers`` holds right-hand limits: at the clearing sample it is the
    postfault value.  The fault-on value at that same instant is kept in
    ``clear_acc_powers`` so that integrals over the fault-on segment can be
    closed exactly.
    """

    times: np.ndarray
    angles: np.ndarray       # (samples, machines), rad
    speeds: np.ndarray       # (samples, machines), rad/s deviation
    acc_powers: np.ndarray   # (samples, machines), Pm - Pe
    clear_index: int
    clear_acc_powers: np.ndarray
    ids: tuple[str, ...]
    inertia: np.ndarray
    case_ref: str = ""

    def __post_init__(self):
        for name in ("times", "angles", "speeds", "acc_powers", "clear_acc_powers", "inertia"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n_s = self.times.shape[0]
        n_m = len(self.ids)
        for name in ("angles", "speeds", "acc_powers"):
            if getattr(self, name).shape != (n_s, n_m):
                raise ValueError(f"{name} shape {getattr(self, name).shape} != {(n_s, n_m)}")
        if n_s > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")
        if not 0 <= self.clear_index < n_s:
            raise ValueError("clear_index out of range")

    @property
    def clear_time(self) -> float:
        return float(self.times[self.clear_index])

    def index(self, machine_id) -> int:
        try:
            return self.ids.index(str(machine_id))
        except ValueError:
            raise AnalysisError(f"unknown machine id {machine_id!r}") from None


def _rk4_segment(case, stage, y0, t0, h, steps, on_sample):
    M, D, Pm, E = case.M, case.D, case.Pm, case.E
    n = case.n
    EG = E[:, None] * E[None, :] * stage.conductance_G
    EB = E[:, None] * E[None, :] * stage.susceptance_B

    def rhs(y):
        d, w = y[:n], y[n:]
        dij = d[:, None] - d[None, :]
        pe = np.sum(EG * np.cos(dij) + EB * np.sin(dij), axis=1)
        return np.concatenate((w, (Pm - pe - D * w) / M))

    y = y0
    for k in range(1, steps + 1):
        # non-finite states are reported below rather than warned about
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * h * k1)
            k3 = rhs(y + 0.5 * h * k2)
            k4 = rhs(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + k * h
        if not np.all(np.isfinite(y)):
            raise SimulationError(f"numerical blow-up at t={t:.6g}")
        on_sample(t, y)
    return y


def simulate(case: SystemCase, t_end: float, dt: float = DEFAULT_DT) -> Trajectory:
    """Integrate from the prefault equilibrium through fault and clearing.

    The fault is applied at t = 0.  Both the fault-on interval and the
    postfault interval are divided into whole steps no longer than ``dt``, so
    a sample lands exactly on the clearing time.
    """
    if not 0 < dt <= 0.01:
        raise ValueError("dt must satisfy 0 < dt <= 0.01")
    t_clear = case.fault.clear_time
    if not t_end > t_clear:
        raise ValueError("t_end must exceed the clearing time")
    n = case.n
    d0 = prefault_equilibrium(case)
    y0 = np.concatenate((d0, np.zeros(n)))
    faulton, postfault = case.stage("faulton"), case.stage("postfault")

    n_on = max(1, math.ceil(t_clear / dt - 1e-9))
    n_post = max(1, math.ceil((t_end - t_clear) / dt - 1e-9))
    h_on = t_clear / n_on
    h_post = (t_end - t_clear) / n_post

    times = np.empty(n_on + n_post + 1)
    states = np.empty((times.size, 2 * n))
    times[0], states[0] = 0.0, y0
    cursor = [1]

    def record(t, y):
        times[cursor[0]] = t
        states[cursor[0]] = y
        cursor[0] += 1

    y_c = _rk4_segment(case, faulton, y0, 0.0, h_on, n_on, record)
    times[n_on] = t_clear
    _rk4_segment(case, postfault, y_c, t_clear, h_post, n_post, record)
    times[-1] = t_end

    angles = states[:, :n]
    speeds = states[:, n:]
    acc = np.empty_like(angles)
    for k in range(times.size):
        stage = faulton if k < n_on else postfault
        acc[k] = accelerating_power(stage, case, angles[k])
    clear_left = accelerating_power(faulton, case, angles[n_on])

    return Trajectory(
        times=times,
        angles=angles,
        speeds=speeds,
        acc_powers=acc,
        clear_index=n_on,
        clear_acc_powers=clear_left,
        ids=tuple(case.ids),
        inertia=case.M,
        case_ref=case.name,
    )


def refine_crossing(t0: float, v0: float, t1: float, v1: float) -> float:
    """Time at which the line through (t0, v0) and (t1, v1) crosses zero."""
    if v0 == 0:
        return t0
    if v1 == 0:
        return t1
    if (v0 > 0) == (v1 > 0):
        raise AnalysisError("no crossing")
    return t0 + (t1 - t0) * v0 / (v0 - v1)


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> Path:
    path = Path(path)
    header = (
        ["t"]
        + [f"delta_{i}" for i in traj.ids]
        + [f"omega_{i}" for i in traj.ids]
        + [f"f_{i}" for i in traj.ids]
    )
    rows = np.column_stack((traj.times, traj.angles, traj.speeds, traj.acc_powers))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.9g}" for v in row])
    return path
