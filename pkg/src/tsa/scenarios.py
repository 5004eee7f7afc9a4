"""Shipped test cases and the scenario suite built on them.

A scenario names a base case and overrides its fault (bus, clearing time),
the set of branches opened at clearing, the simulated horizon and optionally
a fixed group pattern.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import CaseError
from .system import SystemCase, build_case


def _data_path(*parts: str):
    ref = resources.files("tsa").joinpath("data")
    for part in parts:
        ref = ref.joinpath(part)
    return ref


def case_path(name: str) -> Path:
    """Filesystem path of a shipped case (``wscc9`` or ``ne39``)."""
    ref = _data_path("cases", f"{name}.json")
    if not ref.is_file():
        raise CaseError(f"case not found: {name}")
    return Path(str(ref))


@lru_cache(maxsize=None)
def _case_text(name: str) -> str:
    return case_path(name).read_text()


def case_dict(name: str) -> dict:
    return json.loads(_case_text(name))


@dataclass(frozen=True)
class Scenario:
    name: str
    case: str
    fault_bus: int
    clear_time: float
    trips: tuple[tuple[int, int], ...]
    t_end: float
    pattern: tuple[str, ...] | None   # critical ids, or None for automatic selection
    note: str = ""

    def case_data(self, clear_time: float | None = None) -> dict:
        data = case_dict(self.case)
        data = copy.deepcopy(data)
        data["meta"]["name"] = self.name
        data["fault"] = {"bus": self.fault_bus, "clear_time": self.clear_time if clear_time is None else clear_time}
        apply_trips(data, self.trips)
        return data

    def build(self, clear_time: float | None = None) -> SystemCase:
        return build_case(self.case_data(clear_time))


def apply_trips(data: dict, trips) -> dict:
    """Open the listed branches in the postfault stage (in place)."""
    branches = data["network"]["branches"]
    for a, b in trips:
        hit = [br for br in branches if {br["from"], br["to"]} == {a, b}]
        if not hit:
            raise CaseError(f"malformed case: no branch {a}-{b} to trip")
        for br in hit:
            br["status_postfault"] = 0
    return data


def load_scenarios() -> list[Scenario]:
    raw = json.loads(_data_path("scenarios.json").read_text())
    out = []
    for s in raw["scenarios"]:
        pattern = s.get("pattern", "auto")
        out.append(Scenario(
            name=s["name"],
            case=s["case"],
            fault_bus=int(s["fault"]["bus"]),
            clear_time=float(s["fault"]["clear_time"]),
            trips=tuple(tuple(int(v) for v in t) for t in s.get("trips", [])),
            t_end=float(s["t_end"]),
            pattern=None if pattern == "auto" else tuple(str(i) for i in pattern),
            note=s.get("note", ""),
        ))
    return out


def scenario(name: str) -> Scenario:
    for s in load_scenarios():
        if s.name == name:
            return s
    raise CaseError(f"unknown scenario {name!r}")
