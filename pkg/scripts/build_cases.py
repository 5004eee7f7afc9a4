"""Regenerate the network-mode case files shipped in ``tsa/data/cases``.

The library deliberately has no power-flow solver, so the solved snapshot
that network-mode cases need is produced here once, offline, with a plain
Newton-Raphson power flow.  Run from the repository root::

    python scripts/build_cases.py

Sources: WSCC 3-machine 9-bus system (Anderson & Fouad, ch. 2) and the
New England 10-machine 39-bus system (Athay et al. 1979 network data with
the generator constants tabulated in Pai, 1989).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "tsa" / "data" / "cases"

# bus, type (3 slack / 2 PV / 1 PQ), Pd, Qd (MW, Mvar), Vm setpoint
WSCC_BUS = [
    (1, 3, 0.0, 0.0, 1.04),
    (2, 2, 0.0, 0.0, 1.025),
    (3, 2, 0.0, 0.0, 1.025),
    (4, 1, 0.0, 0.0, 1.0),
    (5, 1, 125.0, 50.0, 1.0),
    (6, 1, 90.0, 30.0, 1.0),
    (7, 1, 0.0, 0.0, 1.0),
    (8, 1, 100.0, 35.0, 1.0),
    (9, 1, 0.0, 0.0, 1.0),
]
# from, to, r, x, b(total), tap
WSCC_BRANCH = [
    (1, 4, 0.0, 0.0576, 0.0, 1.0),
    (4, 5, 0.010, 0.085, 0.176, 1.0),
    (4, 6, 0.017, 0.092, 0.158, 1.0),
    (5, 7, 0.032, 0.161, 0.306, 1.0),
    (6, 9, 0.039, 0.170, 0.358, 1.0),
    (7, 8, 0.0085, 0.072, 0.149, 1.0),
    (8, 9, 0.0119, 0.1008, 0.209, 1.0),
    (2, 7, 0.0, 0.0625, 0.0, 1.0),
    (3, 9, 0.0, 0.0586, 0.0, 1.0),
]
# id, bus, Pg (MW), H (s, system base), xd'
WSCC_GEN = [
    ("1", 1, 71.6, 23.64, 0.0608),
    ("2", 2, 163.0, 6.40, 0.1198),
    ("3", 3, 85.0, 3.01, 0.1813),
]

NE39_BUS = [
    (1, 1, 97.6, 44.2, 1.0), (2, 1, 0, 0, 1.0), (3, 1, 322, 2.4, 1.0),
    (4, 1, 500, 184, 1.0), (5, 1, 0, 0, 1.0), (6, 1, 0, 0, 1.0),
    (7, 1, 233.8, 84, 1.0), (8, 1, 522, 176.6, 1.0), (9, 1, 6.5, -66.6, 1.0),
    (10, 1, 0, 0, 1.0), (11, 1, 0, 0, 1.0), (12, 1, 8.53, 88, 1.0),
    (13, 1, 0, 0, 1.0), (14, 1, 0, 0, 1.0), (15, 1, 320, 153, 1.0),
    (16, 1, 329, 32.3, 1.0), (17, 1, 0, 0, 1.0), (18, 1, 158, 30, 1.0),
    (19, 1, 0, 0, 1.0), (20, 1, 680, 103, 1.0), (21, 1, 274, 115, 1.0),
    (22, 1, 0, 0, 1.0), (23, 1, 247.5, 84.6, 1.0), (24, 1, 308.6, -92.2, 1.0),
    (25, 1, 224, 47.2, 1.0), (26, 1, 139, 17, 1.0), (27, 1, 281, 75.5, 1.0),
    (28, 1, 206, 27.6, 1.0), (29, 1, 283.5, 26.9, 1.0), (30, 2, 0, 0, 1.0499),
    (31, 3, 9.2, 4.6, 0.982), (32, 2, 0, 0, 0.9841), (33, 2, 0, 0, 0.9972),
    (34, 2, 0, 0, 1.0123), (35, 2, 0, 0, 1.0494), (36, 2, 0, 0, 1.0636),
    (37, 2, 0, 0, 1.0275), (38, 2, 0, 0, 1.0265), (39, 2, 1104, 250, 1.03),
]
NE39_BRANCH = [
    (1, 2, 0.0035, 0.0411, 0.6987, 1.0), (1, 39, 0.001, 0.025, 0.75, 1.0),
    (2, 3, 0.0013, 0.0151, 0.2572, 1.0), (2, 25, 0.007, 0.0086, 0.146, 1.0),
    (2, 30, 0.0, 0.0181, 0.0, 1.025), (3, 4, 0.0013, 0.0213, 0.2214, 1.0),
    (3, 18, 0.0011, 0.0133, 0.2138, 1.0), (4, 5, 0.0008, 0.0128, 0.1342, 1.0),
    (4, 14, 0.0008, 0.0129, 0.1382, 1.0), (5, 6, 0.0002, 0.0026, 0.0434, 1.0),
    (5, 8, 0.0008, 0.0112, 0.1476, 1.0), (6, 7, 0.0006, 0.0092, 0.113, 1.0),
    (6, 11, 0.0007, 0.0082, 0.1389, 1.0), (6, 31, 0.0, 0.025, 0.0, 1.07),
    (7, 8, 0.0004, 0.0046, 0.078, 1.0), (8, 9, 0.0023, 0.0363, 0.3804, 1.0),
    (9, 39, 0.001, 0.025, 1.2, 1.0), (10, 11, 0.0004, 0.0043, 0.0729, 1.0),
    (10, 13, 0.0004, 0.0043, 0.0729, 1.0), (10, 32, 0.0, 0.02, 0.0, 1.07),
    (12, 11, 0.0016, 0.0435, 0.0, 1.006), (12, 13, 0.0016, 0.0435, 0.0, 1.006),
    (13, 14, 0.0009, 0.0101, 0.1723, 1.0), (14, 15, 0.0018, 0.0217, 0.366, 1.0),
    (15, 16, 0.0009, 0.0094, 0.171, 1.0), (16, 17, 0.0007, 0.0089, 0.1342, 1.0),
    (16, 19, 0.0016, 0.0195, 0.304, 1.0), (16, 21, 0.0008, 0.0135, 0.2548, 1.0),
    (16, 24, 0.0003, 0.0059, 0.068, 1.0), (17, 18, 0.0007, 0.0082, 0.1319, 1.0),
    (17, 27, 0.0013, 0.0173, 0.3216, 1.0), (19, 20, 0.0007, 0.0138, 0.0, 1.06),
    (19, 33, 0.0007, 0.0142, 0.0, 1.07), (20, 34, 0.0009, 0.018, 0.0, 1.009),
    (21, 22, 0.0008, 0.014, 0.2565, 1.0), (22, 23, 0.0006, 0.0096, 0.1846, 1.0),
    (22, 35, 0.0, 0.0143, 0.0, 1.025), (23, 24, 0.0022, 0.035, 0.361, 1.0),
    (23, 36, 0.0005, 0.0272, 0.0, 1.0), (25, 26, 0.0032, 0.0323, 0.531, 1.0),
    (25, 37, 0.0006, 0.0232, 0.0, 1.025), (26, 27, 0.0014, 0.0147, 0.2396, 1.0),
    (26, 28, 0.0043, 0.0474, 0.7802, 1.0), (26, 29, 0.0057, 0.0625, 1.029, 1.0),
    (28, 29, 0.0014, 0.0151, 0.249, 1.0), (29, 38, 0.0008, 0.0156, 0.0, 1.025),
]
NE39_GEN = [
    ("30", 30, 250.0, 42.0, 0.031),
    ("31", 31, None, 30.3, 0.0697),
    ("32", 32, 650.0, 35.8, 0.0531),
    ("33", 33, 632.0, 28.6, 0.0436),
    ("34", 34, 508.0, 26.0, 0.132),
    ("35", 35, 650.0, 34.8, 0.05),
    ("36", 36, 560.0, 26.4, 0.049),
    ("37", 37, 540.0, 24.3, 0.057),
    ("38", 38, 830.0, 34.5, 0.057),
    ("39", 39, 1000.0, 500.0, 0.006),
]


def ybus(buses, branches):
    index = {b[0]: k for k, b in enumerate(buses)}
    Y = np.zeros((len(buses), len(buses)), dtype=complex)
    for f, t, r, x, b, tap in branches:
        i, j = index[f], index[t]
        y = 1.0 / complex(r, x)
        Y[i, i] += (y + 0.5j * b) / tap**2
        Y[j, j] += y + 0.5j * b
        Y[i, j] -= y / tap
        Y[j, i] -= y / tap
    return Y


def newton_pf(buses, branches, gens, base_mva):
    Y = ybus(buses, branches)
    n = len(buses)
    index = {b[0]: k for k, b in enumerate(buses)}
    kind = np.array([b[1] for b in buses])
    P = -np.array([b[2] for b in buses]) / base_mva
    Q = -np.array([b[3] for b in buses]) / base_mva
    for _, bus, pg, _, _ in gens:
        if pg is not None:
            P[index[bus]] += pg / base_mva
    vm = np.array([b[4] for b in buses], dtype=float)
    va = np.zeros(n)
    pvpq = np.flatnonzero(kind != 3)
    pq = np.flatnonzero(kind == 1)
    for _ in range(50):
        V = vm * np.exp(1j * va)
        S = V * np.conj(Y @ V)
        mis = np.r_[S.real[pvpq] - P[pvpq], S.imag[pq] - Q[pq]]
        if np.max(np.abs(mis)) < 1e-12:
            break
        # complex derivatives, as in the usual polar formulation
        Ibus = Y @ V
        dS_dva = 1j * np.diag(V) @ np.conj(np.diag(Ibus) - Y @ np.diag(V))
        dS_dvm = np.diag(V) @ np.conj(Y @ np.diag(V / vm)) + np.diag(np.conj(Ibus) * V / vm)
        J = np.block([
            [dS_dva.real[np.ix_(pvpq, pvpq)], dS_dvm.real[np.ix_(pvpq, pq)]],
            [dS_dva.imag[np.ix_(pq, pvpq)], dS_dvm.imag[np.ix_(pq, pq)]],
        ])
        dx = np.linalg.solve(J, -mis)
        va[pvpq] += dx[: len(pvpq)]
        vm[pq] += dx[len(pvpq):]
    else:
        raise RuntimeError("power flow did not converge")
    V = vm * np.exp(1j * va)
    S = V * np.conj(Y @ V)
    return vm, va, S, index


def case_dict(name, buses, branches, gens, base_mva, fault_bus, clear_time):
    vm, va, S, index = newton_pf(buses, branches, gens, base_mva)
    machine_pq = []
    machines = []
    for gid, bus, _, H, xdp in gens:
        k = index[bus]
        sg = S[k] + complex(buses[k][2], buses[k][3]) / base_mva
        machine_pq.append({"id": gid, "P": float(sg.real), "Q": float(sg.imag)})
        machines.append({"id": gid, "H": H, "D": 0.0, "xd_prime": xdp, "bus": bus})
    return {
        "meta": {"name": name, "base_mva": base_mva, "omega_syn": 2 * np.pi * 60},
        "mode": "network",
        "machines": machines,
        "network": {
            "buses": [
                {"id": b[0], "Pd": b[2] / base_mva, "Qd": b[3] / base_mva, "Gs": 0.0, "Bs": 0.0}
                for b in buses
            ],
            "branches": [
                {"from": f, "to": t, "r": r, "x": x, "b": b, "tap": tap, "status_postfault": 1}
                for f, t, r, x, b, tap in branches
            ],
            "snapshot": {
                "bus_voltages": [
                    {"bus": b[0], "Vm": float(vm[k]), "Va": float(va[k])} for k, b in enumerate(buses)
                ],
                "machine_pq": machine_pq,
            },
        },
        "fault": {"bus": fault_bus, "clear_time": clear_time},
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    cases = {
        "wscc9.json": case_dict("wscc9", WSCC_BUS, WSCC_BRANCH, WSCC_GEN, 100.0, 7, 0.08),
        "ne39.json": case_dict("ne39", NE39_BUS, NE39_BRANCH, NE39_GEN, 100.0, 16, 0.1),
    }
    for fname, data in cases.items():
        (OUT / fname).write_text(json.dumps(data, indent=1) + "\n")
        print("wrote", OUT / fname)


if __name__ == "__main__":
    main()
