"""Classical-model system description: case ingestion, Kron reduction and power.

A case is either given directly as reduced admittance matrices at the
generator internal nodes ("reduced" mode) or as a bus/branch network with a
solved power-flow snapshot ("network" mode).  In network mode loads become
constant admittances, each machine gets a constant EMF behind its transient
reactance, and the network is reduced to the internal nodes for each of the
three fault stages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import CaseError

STAGES = ("prefault", "faulton", "postfault")

SYMMETRY_TOL = 1e-9
SNAPSHOT_TOL = 1e-6
EQUILIBRIUM_TOL = 1e-10


def _frozen(a: Any) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class MachineParams:
    id: str
    inertia_M: float
    mech_power_Pm: float
    emf_mag: float
    xd_prime: float
    bus: Any = None
    damping_D: float = 0.0

    def __post_init__(self):
        if not self.inertia_M > 0:
            raise CaseError(f"malformed case: machine {self.id} needs inertia_M > 0")
        if not self.emf_mag > 0:
            raise CaseError(f"malformed case: machine {self.id} needs emf_mag > 0")
        if not self.xd_prime > 0:
            raise CaseError(f"malformed case: machine {self.id} needs xd_prime > 0")


@dataclass(frozen=True)
class ReducedNetworkStage:
    stage: str
    conductance_G: np.ndarray
    susceptance_B: np.ndarray

    def __post_init__(self):
        if self.stage not in STAGES:
            raise CaseError(f"malformed case: unknown stage {self.stage!r}")
        G = _frozen(self.conductance_G)
        B = _frozen(self.susceptance_B)
        if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape != B.shape:
            raise CaseError(f"malformed case: {self.stage} G/B must be equal square matrices")
        if np.max(np.abs(G - G.T), initial=0.0) > SYMMETRY_TOL:
            raise CaseError(f"malformed case: {self.stage} G is not symmetric")
        if np.max(np.abs(B - B.T), initial=0.0) > SYMMETRY_TOL:
            raise CaseError(f"malformed case: {self.stage} B is not symmetric")
        object.__setattr__(self, "conductance_G", G)
        object.__setattr__(self, "susceptance_B", B)

    @property
    def size(self) -> int:
        return self.conductance_G.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ReducedNetworkStage):
            return NotImplemented
        return (
            self.stage == other.stage
            and np.array_equal(self.conductance_G, other.conductance_G)
            and np.array_equal(self.susceptance_B, other.susceptance_B)
        )

    __hash__ = None


@dataclass(frozen=True)
class Fault:
    bus: Any
    clear_time: float


@dataclass(frozen=True)
class SystemCase:
    """Immutable simulation input.

    ``initial_angles`` holds the snapshot EMF angles for network-mode cases
    and is ``None`` in reduced mode.
    """

    machines: tuple[MachineParams, ...]
    stages: tuple[ReducedNetworkStage, ReducedNetworkStage, ReducedNetworkStage]
    fault: Fault
    name: str = "case"
    base_mva: float = 100.0
    omega_syn: float = 2 * np.pi * 60
    mode: str = "reduced"
    initial_angles: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        ids = [m.id for m in self.machines]
        if len(set(ids)) != len(ids):
            raise CaseError("malformed case: machine ids must be unique")
        if not self.fault.clear_time > 0:
            raise CaseError("malformed case: clear_time must be > 0")
        if tuple(s.stage for s in self.stages) != STAGES:
            raise CaseError("malformed case: stages must be prefault, faulton, postfault")
        n = len(self.machines)
        for s in self.stages:
            if s.size != n:
                raise CaseError(f"malformed case: {s.stage} matrices are {s.size}x{s.size}, expected {n}x{n}")
        if self.initial_angles is not None:
            object.__setattr__(self, "initial_angles", _frozen(self.initial_angles))

    @property
    def ids(self) -> list[str]:
        return [m.id for m in self.machines]

    @property
    def n(self) -> int:
        return len(self.machines)

    @property
    def M(self) -> np.ndarray:
        return np.array([m.inertia_M for m in self.machines])

    @property
    def D(self) -> np.ndarray:
        return np.array([m.damping_D for m in self.machines])

    @property
    def Pm(self) -> np.ndarray:
        return np.array([m.mech_power_Pm for m in self.machines])

    @property
    def E(self) -> np.ndarray:
        return np.array([m.emf_mag for m in self.machines])

    def stage(self, name: str) -> ReducedNetworkStage:
        return self.stages[STAGES.index(name)]

    def index(self, machine_id) -> int:
        try:
            return self.ids.index(str(machine_id))
        except ValueError:
            raise KeyError(f"unknown machine id {machine_id!r}") from None


# ---------------------------------------------------------------------------
# power


def electrical_power(stage: ReducedNetworkStage, emfs, angles) -> np.ndarray:
    """Pe_i = E_i^2 G_ii + sum_j E_i E_j (G_ij cos d_ij + B_ij sin d_ij)."""
    E = np.asarray(emfs, dtype=float)
    d = np.asarray(angles, dtype=float)
    if E.shape != (stage.size,) or d.shape != (stage.size,):
        raise ValueError(f"dimension mismatch: stage is {stage.size}, got E{E.shape} and angles{d.shape}")
    dij = d[:, None] - d[None, :]
    EE = E[:, None] * E[None, :]
    return np.sum(EE * (stage.conductance_G * np.cos(dij) + stage.susceptance_B * np.sin(dij)), axis=1)


def accelerating_power(stage: ReducedNetworkStage, case: SystemCase, angles) -> np.ndarray:
    """Absolute-frame accelerating power Pm - Pe (damping excluded)."""
    return case.Pm - electrical_power(stage, case.E, angles)


def _power_jacobian(stage: ReducedNetworkStage, E: np.ndarray, d: np.ndarray) -> np.ndarray:
    dij = d[:, None] - d[None, :]
    EE = E[:, None] * E[None, :]
    # dPe_i/dd_j for j != i
    J = EE * (stage.conductance_G * np.sin(dij) - stage.susceptance_B * np.cos(dij))
    np.fill_diagonal(J, 0.0)
    np.fill_diagonal(J, -J.sum(axis=1))
    return J


def prefault_equilibrium(case: SystemCase, max_iter: int = 200) -> np.ndarray:
    """Absolute rotor angles at which Pm = Pe on the prefault network.

    Network-mode cases return the snapshot EMF angles unchanged.  Reduced-mode
    cases run a damped Gauss-Newton iteration from zero angles with the first
    machine held as the angle reference.
    """
    if case.initial_angles is not None:
        return np.array(case.initial_angles)
    pre = case.stage("prefault")
    E, Pm = case.E, case.Pm
    d = np.zeros(case.n)
    if case.n == 1:
        r = Pm - electrical_power(pre, E, d)
        if np.max(np.abs(r)) > EQUILIBRIUM_TOL:
            raise CaseError("no prefault equilibrium")
        return d

    def residual(x):
        return Pm - electrical_power(pre, E, x)

    r = residual(d)
    norm = np.linalg.norm(r)
    for _ in range(max_iter):
        if np.max(np.abs(r)) <= 1e-13:
            break
        J = -_power_jacobian(pre, E, d)[:, 1:]
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        lam = 1.0
        while lam > 1e-6:
            trial = d.copy()
            trial[1:] += lam * step
            r_trial = residual(trial)
            if np.linalg.norm(r_trial) < norm:
                break
            lam *= 0.5
        else:
            break
        d, r = trial, r_trial
        new_norm = np.linalg.norm(r)
        if norm - new_norm <= 1e-16 * max(1.0, norm):
            norm = new_norm
            break
        norm = new_norm
    if not np.all(np.isfinite(d)) or np.max(np.abs(r)) > EQUILIBRIUM_TOL:
        raise CaseError("no prefault equilibrium")
    return d


# ---------------------------------------------------------------------------
# network construction


def kron_reduce(Y: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Eliminate every node not in ``keep`` from a nodal admittance matrix."""
    Y = np.asarray(Y, dtype=complex)
    keep = np.asarray(keep, dtype=int)
    drop = np.setdiff1d(np.arange(Y.shape[0]), keep)
    if drop.size == 0:
        return Y[np.ix_(keep, keep)].copy()
    Yee = Y[np.ix_(drop, drop)]
    if np.linalg.cond(Yee) > 1e13:
        raise CaseError("unreducible network")
    try:
        X = np.linalg.solve(Yee, Y[np.ix_(drop, keep)])
    except np.linalg.LinAlgError:
        raise CaseError("unreducible network") from None
    return Y[np.ix_(keep, keep)] - Y[np.ix_(keep, drop)] @ X


def _bus_admittance(buses, branches, bus_index, postfault: bool) -> np.ndarray:
    nb = len(buses)
    Y = np.zeros((nb, nb), dtype=complex)
    for br in branches:
        if postfault and not br["status_postfault"]:
            continue
        i, j = bus_index[br["from"]], bus_index[br["to"]]
        y = 1.0 / complex(br["r"], br["x"])
        tap = br.get("tap", 1.0) or 1.0
        half_b = 0.5j * br.get("b", 0.0)
        Y[i, i] += (y + half_b) / tap**2
        Y[j, j] += y + half_b
        Y[i, j] -= y / tap
        Y[j, i] -= y / tap
    for k, b in enumerate(buses):
        Y[k, k] += complex(b.get("Gs", 0.0), b.get("Bs", 0.0))
    return Y


def _require(mapping: Mapping, *keys):
    try:
        return [mapping[k] for k in keys]
    except (KeyError, TypeError) as exc:
        raise CaseError(f"malformed case: missing field {exc}") from None


def _network_stages(raw_machines, net, fault_bus, omega_syn):
    buses, branches, snapshot = _require(net, "buses", "branches", "snapshot")
    bus_ids = [b["id"] for b in buses]
    if len(set(bus_ids)) != len(bus_ids):
        raise CaseError("malformed case: duplicate bus ids")
    bus_index = {b: k for k, b in enumerate(bus_ids)}
    for br in branches:
        if br.get("from") not in bus_index or br.get("to") not in bus_index:
            raise CaseError(f"malformed case: branch {br.get('from')}-{br.get('to')} references unknown bus")
    if fault_bus not in bus_index:
        raise CaseError(f"malformed case: fault bus {fault_bus!r} not in network")
    nb = len(buses)

    V = np.zeros(nb, dtype=complex)
    seen = set()
    for bv in snapshot["bus_voltages"]:
        if bv["bus"] not in bus_index:
            raise CaseError(f"malformed case: snapshot voltage for unknown bus {bv['bus']!r}")
        V[bus_index[bv["bus"]]] = bv["Vm"] * np.exp(1j * bv["Va"])
        seen.add(bv["bus"])
    if len(seen) != nb:
        raise CaseError("malformed case: snapshot must give a voltage for every bus")
    pq = {str(m["id"]): complex(m["P"], m["Q"]) for m in snapshot["machine_pq"]}

    # snapshot consistency: network injections against generation minus load
    Ybus = _bus_admittance(buses, branches, bus_index, postfault=False)
    S_sched = np.array([-complex(b.get("Pd", 0.0), b.get("Qd", 0.0)) for b in buses])
    for m in raw_machines:
        mid = str(m["id"])
        if mid not in pq:
            raise CaseError(f"malformed case: no snapshot P,Q for machine {mid}")
        if m.get("bus") not in bus_index:
            raise CaseError(f"malformed case: machine {mid} bus {m.get('bus')!r} not in network")
        S_sched[bus_index[m["bus"]]] += pq[mid]
    S_calc = V * np.conj(Ybus @ V)
    worst = np.max(np.abs(np.r_[(S_calc - S_sched).real, (S_calc - S_sched).imag]))
    if worst > SNAPSHOT_TOL:
        raise CaseError(f"inconsistent snapshot: power mismatch {worst:.3e} p.u.")

    y_load = np.array([complex(b.get("Pd", 0.0), -b.get("Qd", 0.0)) for b in buses]) / np.abs(V) ** 2

    ng = len(raw_machines)
    emf = np.zeros(ng, dtype=complex)
    y_xd = np.zeros(ng, dtype=complex)
    term = np.zeros(ng, dtype=int)
    Pm = np.zeros(ng)
    for g, m in enumerate(raw_machines):
        k = bus_index[m["bus"]]
        s = pq[str(m["id"])]
        current = np.conj(s / V[k])
        emf[g] = V[k] + 1j * m["xd_prime"] * current
        y_xd[g] = 1.0 / (1j * m["xd_prime"])
        term[g] = k
        Pm[g] = s.real

    def reduce(postfault: bool, grounded=None):
        Yb = _bus_admittance(buses, branches, bus_index, postfault) + np.diag(y_load)
        Y = np.zeros((ng + nb, ng + nb), dtype=complex)
        Y[ng:, ng:] = Yb
        for g in range(ng):
            Y[g, g] += y_xd[g]
            Y[ng + term[g], ng + term[g]] += y_xd[g]
            Y[g, ng + term[g]] -= y_xd[g]
            Y[ng + term[g], g] -= y_xd[g]
        nodes = np.arange(ng + nb)
        if grounded is not None:
            nodes = nodes[nodes != ng + grounded]
            Y = Y[np.ix_(nodes, nodes)]
        return kron_reduce(Y, np.arange(ng))

    reduced = {
        "prefault": reduce(False),
        "faulton": reduce(False, grounded=bus_index[fault_bus]),
        "postfault": reduce(True),
    }
    return reduced, np.abs(emf), np.angle(emf), Pm


def build_case(content: str | bytes | Mapping) -> SystemCase:
    """Parse a JSON case (text or already-decoded mapping) into a SystemCase."""
    if isinstance(content, (str, bytes)):
        try:
            data = json.loads(content)
        except json.JSONDecodeError as exc:
            raise CaseError(f"malformed case: {exc}") from None
    else:
        data = content
    if not isinstance(data, Mapping):
        raise CaseError("malformed case: top level must be an object")
    meta, raw_machines, mode, fault = _require(data, "meta", "machines", "mode", "fault")
    omega_syn = float(meta.get("omega_syn", 2 * np.pi * 60))
    fault_bus, clear_time = _require(fault, "bus", "clear_time")
    if not isinstance(raw_machines, list) or not raw_machines:
        raise CaseError("malformed case: machines must be a non-empty list")
    has_reduced = "reduced" in data
    has_network = "network" in data
    if has_reduced == has_network or mode not in ("reduced", "network"):
        raise CaseError("malformed case: give exactly one of 'reduced' or 'network' matching 'mode'")
    if (mode == "reduced") != has_reduced:
        raise CaseError("malformed case: mode does not match supplied section")

    initial = None
    try:
        if mode == "network":
            reduced, E, initial, Pm = _network_stages(raw_machines, data["network"], fault_bus, omega_syn)
            stages = tuple(
                ReducedNetworkStage(s, reduced[s].real, reduced[s].imag) for s in STAGES
            )
        else:
            red = data["reduced"]
            stages = tuple(
                ReducedNetworkStage(s, *_require(red[s], "G", "B")) for s in STAGES
            )
            E = np.array([float(m["E"]) for m in raw_machines])
            Pm = np.array([float(m["Pm"]) for m in raw_machines])
        machines = tuple(
            MachineParams(
                id=str(m["id"]),
                inertia_M=2.0 * float(m["H"]) / omega_syn,
                mech_power_Pm=float(Pm[k]),
                emf_mag=float(E[k]),
                xd_prime=float(m["xd_prime"]),
                bus=m.get("bus"),
                damping_D=float(m.get("D", 0.0)),
            )
            for k, m in enumerate(raw_machines)
        )
    except KeyError as exc:
        raise CaseError(f"malformed case: missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise CaseError(f"malformed case: {exc}") from None

    return SystemCase(
        machines=machines,
        stages=stages,
        fault=Fault(fault_bus, float(clear_time)),
        name=str(meta.get("name", "case")),
        base_mva=float(meta.get("base_mva", 100.0)),
        omega_syn=omega_syn,
        mode=mode,
        initial_angles=initial,
    )


def load_case(path: str | Path) -> SystemCase:
    path = Path(path)
    if not path.is_file():
        raise CaseError(f"case not found: {path}")
    return build_case(path.read_text())
