"""Circuit representation: elements, node table, solver options, system state.

A circuit is a flat list of named two/three-terminal elements over named
nodes.  Node "0" is ground.  Elaboration checks the structural invariants the
solver relies on (unique names, declared nodes, a conductive path or a
capacitor on every node).
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .devices import FinFETParams, PTMParams, PTMState
from .errors import DuplicateName, SingularStructure

GROUND = "0"


@dataclass(frozen=True)
class PWL:
    """Piecewise-linear time profile; constant extrapolation beyond the ends."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        times = [t for t, _ in self.points]
        if not self.points:
            raise ValueError("PWL needs at least one point")
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("PWL times must be strictly increasing")

    def __call__(self, t: float) -> float:
        pts = self.points
        if t <= pts[0][0]:
            return pts[0][1]
        if t >= pts[-1][0]:
            return pts[-1][1]
        idx = bisect.bisect_right([p[0] for p in pts], t)
        t0, v0 = pts[idx - 1]
        t1, v1 = pts[idx]
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(t for t, _ in self.points)


Profile = Union[float, PWL]


def eval_profile(profile: Profile, t: float) -> float:
    return profile(t) if isinstance(profile, PWL) else profile


@dataclass
class Resistor:
    name: str
    n1: str
    n2: str
    ohms: float

    def __post_init__(self):
        if self.ohms <= 0:
            raise ValueError(f"{self.name}: resistance must be > 0")

    @property
    def nodes(self):
        return (self.n1, self.n2)


@dataclass
class Capacitor:
    name: str
    n1: str
    n2: str
    farads: float

    def __post_init__(self):
        if self.farads <= 0:
            raise ValueError(f"{self.name}: capacitance must be > 0")

    @property
    def nodes(self):
        return (self.n1, self.n2)


@dataclass
class VoltageSource:
    """Independent voltage source; positive branch current flows from the
    positive node through the source to the negative node."""

    name: str
    pos: str
    neg: str
    value: Profile

    @property
    def nodes(self):
        return (self.pos, self.neg)


@dataclass
class CurrentSource:
    """Independent current source; the set current is drawn out of the
    positive node and delivered into the negative node."""

    name: str
    pos: str
    neg: str
    value: Profile

    @property
    def nodes(self):
        return (self.pos, self.neg)


@dataclass
class FinFET:
    name: str
    drain: str
    gate: str
    source: str
    params: FinFETParams

    @property
    def nodes(self):
        return (self.drain, self.gate, self.source)


@dataclass
class PTM:
    name: str
    n1: str
    n2: str
    params: PTMParams
    initial_state: PTMState = PTMState.INSULATING

    @property
    def nodes(self):
        return (self.n1, self.n2)


Element = Union[Resistor, Capacitor, VoltageSource, CurrentSource, FinFET, PTM]


@dataclass
class SolverOptions:
    abstol_current: float = 1e-12
    reltol: float = 1e-6
    vntol: float = 1e-9
    max_newton_iters: int = 100
    max_state_resolution_iters: int = 10
    dt_initial: float = 0.1e-12
    dt_min: float = 1e-15
    dt_max: float = 50e-12
    integration_method: str = "backward-euler"   # or "trapezoidal"
    # regularizing conductance from every node to ground; anchors nodes whose
    # devices are all cut off (sub-pA error at circuit scale)
    gmin: float = 1e-12

    def __post_init__(self):
        if min(self.abstol_current, self.reltol, self.vntol) <= 0:
            raise ValueError("tolerances must be > 0")
        if self.dt_min > self.dt_initial:
            raise ValueError("dt_min must be <= dt_initial")
        if self.integration_method not in ("backward-euler", "trapezoidal"):
            raise ValueError(f"unknown method {self.integration_method!r}")

    def with_(self, **changes) -> "SolverOptions":
        return replace(self, **changes)


class Circuit:
    """Flat element list plus node table, supply value, and solver options."""

    def __init__(self, name: str = "circuit", v_dd: float = 0.8,
                 options: SolverOptions | None = None):
        if v_dd <= 0:
            raise ValueError("V_DD must be > 0")
        self.name = name
        self.v_dd = v_dd
        self.options = options or SolverOptions()
        self.elements: list[Element] = []
        self._names: set[str] = set()

    def add(self, element: Element) -> Element:
        if element.name in self._names:
            raise DuplicateName(f"duplicate element name {element.name!r}")
        self._names.add(element.name)
        self.elements.append(element)
        return element

    def __getitem__(self, name: str) -> Element:
        for el in self.elements:
            if el.name == name:
                return el
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return name in self._names

    # -- derived tables -------------------------------------------------

    @property
    def nodes(self) -> list[str]:
        """Non-ground nodes in first-appearance order."""
        seen: dict[str, None] = {}
        for el in self.elements:
            for n in el.nodes:
                if n != GROUND and n not in seen:
                    seen[n] = None
        return list(seen)

    @property
    def voltage_sources(self) -> list[VoltageSource]:
        return [el for el in self.elements if isinstance(el, VoltageSource)]

    @property
    def ptm_elements(self) -> list[PTM]:
        return [el for el in self.elements if isinstance(el, PTM)]

    def elaborate(self) -> None:
        """Validate structure: every node needs a conductive path to ground
        or a capacitor.  Resistors, sources, PTMs and FET drain-source
        channels conduct; FET gates and current sources do not."""
        nodes = set(self.nodes)
        adjacency: dict[str, set[str]] = {n: set() for n in nodes | {GROUND}}
        has_cap: set[str] = set()
        for el in self.elements:
            if isinstance(el, (Resistor, VoltageSource, PTM)):
                a, b = el.nodes
                adjacency[a].add(b)
                adjacency[b].add(a)
            elif isinstance(el, FinFET):
                adjacency[el.drain].add(el.source)
                adjacency[el.source].add(el.drain)
            elif isinstance(el, Capacitor):
                has_cap.update(el.nodes)
        reached = {GROUND}
        frontier = [GROUND]
        while frontier:
            n = frontier.pop()
            for m in adjacency[n]:
                if m not in reached:
                    reached.add(m)
                    frontier.append(m)
        stranded = [n for n in nodes if n not in reached and n not in has_cap]
        if stranded:
            raise SingularStructure(
                f"nodes with no DC path to ground and no capacitor: {stranded}")

    def initial_ptm_states(self) -> dict[str, PTMState]:
        return {el.name: el.initial_state for el in self.ptm_elements}


@dataclass
class SystemState:
    """Solution vector at one time point.

    ``voltages`` follows ``circuit.nodes`` order, ``branch_currents`` the
    voltage-source order; ``ptm_states`` holds one discrete state per PTM.
    """

    voltages: np.ndarray
    branch_currents: np.ndarray
    ptm_states: dict[str, PTMState]
    time: float = 0.0

    def copy(self) -> "SystemState":
        return SystemState(self.voltages.copy(), self.branch_currents.copy(),
                           dict(self.ptm_states), self.time)

    @staticmethod
    def zeros(circuit: Circuit, time: float = 0.0) -> "SystemState":
        return SystemState(
            np.zeros(len(circuit.nodes)),
            np.zeros(len(circuit.voltage_sources)),
            circuit.initial_ptm_states(),
            time,
        )

    def matches(self, circuit: Circuit) -> bool:
        return (len(self.voltages) == len(circuit.nodes)
                and len(self.branch_currents) == len(circuit.voltage_sources)
                and set(self.ptm_states) == {p.name for p in circuit.ptm_elements})

    def voltage(self, circuit: Circuit, node: str) -> float:
        if node == GROUND:
            return 0.0
        return float(self.voltages[circuit.nodes.index(node)])
