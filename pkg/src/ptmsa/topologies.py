"""Parametric builders for the six sense-amplifier topologies and the two
device test fixtures, each paired with a default three-phase stimulus
schedule (reset, sense, latch over a 500 ps cycle).

Wiring reconstructions are documented in docs/topologies.md; the hyper
topologies come in exact complementary pairs (swap every device polarity,
reflect the rails, invert every control signal) so ``hp-*`` and ``hn-*``
behave as mirror images.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field, replace

from .circuit import (Capacitor, Circuit, CurrentSource, FinFET, PTM, PWL,
                      Resistor, SolverOptions, SystemState, VoltageSource)
from .devices import FinFETParams, PTMParams, finfet_current
from .errors import InvalidParams


class TopologyKind(enum.Enum):
    CONV_VSA = "conv-vsa"
    CONV_CSA = "conv-csa"
    HP_CSA = "hp-csa"
    HP_VSA = "hp-vsa"
    HN_CSA = "hn-csa"
    HN_VSA = "hn-vsa"
    BULK_PTM_FIXTURE = "bulk-ptm-fixture"
    HYPERFET_FIXTURE = "hyperfet-fixture"


SA_KINDS = (TopologyKind.CONV_VSA, TopologyKind.CONV_CSA, TopologyKind.HP_CSA,
            TopologyKind.HP_VSA, TopologyKind.HN_CSA, TopologyKind.HN_VSA)
PROPOSED_KINDS = (TopologyKind.HP_CSA, TopologyKind.HP_VSA,
                  TopologyKind.HN_CSA, TopologyKind.HN_VSA)


def as_kind(kind) -> TopologyKind:
    return kind if isinstance(kind, TopologyKind) else TopologyKind(kind)


def is_csa(kind: TopologyKind) -> bool:
    return kind in (TopologyKind.CONV_CSA, TopologyKind.HP_CSA,
                    TopologyKind.HN_CSA)


def is_vsa(kind: TopologyKind) -> bool:
    return kind in (TopologyKind.CONV_VSA, TopologyKind.HP_VSA,
                    TopologyKind.HN_VSA)


# High-threshold keeper: the weak device that holds the sense node in the
# quiescent state must lose cleanly to the metallic-state surge, so it gets a
# threshold offset on top of its minimum width.
KEEPER_DVTH = 0.15

_SIZING = {
    TopologyKind.HP_CSA: {"mp1": 6, "mp2": 6, "mp3": 2, "mp4": 2,
                          "mn1": 2, "mn2": 1, "mn3": 2, "mn4": 1},
    TopologyKind.HN_CSA: {"mn1": 6, "mn2": 6, "mn3": 2, "mn4": 2,
                          "mp1": 2, "mp2": 1, "mp3": 2, "mp4": 1},
    TopologyKind.HP_VSA: {"mp2": 6, "mp3": 2, "mp4": 2,
                          "mn1": 2, "mn2": 1, "mn3": 2, "mn4": 1},
    TopologyKind.HN_VSA: {"mn2": 6, "mn3": 2, "mn4": 2,
                          "mp1": 2, "mp2": 1, "mp3": 2, "mp4": 1},
    TopologyKind.CONV_CSA: {"mn_mc": 6, "mn_mr": 6, "mn_ic": 2, "mn_ir": 2,
                            "mn_tail": 2, "mp_l1": 2, "mp_l2": 2,
                            "mn_xrst": 2, "mp_buf": 2, "mn_buf": 2},
    TopologyKind.CONV_VSA: {"mp_pre": 2, "mn_acc": 2, "mn_ref": 2, "mn_in": 2,
                            "mn_tail": 2, "mp_l1": 2, "mp_l2": 2,
                            "mn_xrst": 2, "mp_buf": 2, "mn_buf": 2},
}

# Devices whose threshold variation dominates sensing accuracy (the 6-fin
# mirror/host pair); conventional baselines vary every transistor.
MC_SENSITIVE = {
    TopologyKind.HP_CSA: ("mp1", "mp2"),
    TopologyKind.HP_VSA: ("mp2",),
    TopologyKind.HN_CSA: ("mn1", "mn2"),
    TopologyKind.HN_VSA: ("mn2",),
    TopologyKind.CONV_CSA: tuple(_SIZING[TopologyKind.CONV_CSA]),
    TopologyKind.CONV_VSA: tuple(_SIZING[TopologyKind.CONV_VSA]),
}


@dataclass
class TopologyParams:
    """Sizing, device parameters, loads and stimulus levels for a build."""

    v_dd: float = 0.8
    fet: FinFETParams = field(default_factory=FinFETParams)
    ptm: PTMParams = field(default_factory=PTMParams)
    sizing: dict[str, int] = field(default_factory=dict)
    c_x: float = 1e-15
    c_y: float = 1e-15
    c_bl: float = 20e-15
    i_lrs: float = 200e-6
    i_hrs: float = 15e-6
    v_lrs: float | None = None        # gate level; mirror-derived when None
    v_hrs: float | None = None
    i_ref: float | None = None        # conv-csa; geometric mean when None
    v_ref: float = 0.4                # conv-vsa comparator reference
    v_pre: float | None = None        # conv-vsa precharge target; V_DD when None
    series_r: float | None = None     # bulk fixture series resistance; R_MET when None
    t1: bool = False                  # parallel tuning device
    t2: bool = False                  # series tuning device
    device_dvth: dict[str, float] = field(default_factory=dict)
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not (self.i_lrs > self.i_hrs > 0):
            raise InvalidParams("require I_LRS > I_HRS > 0")
        for name, fins in self.sizing.items():
            if fins < 1:
                raise InvalidParams(f"{name}: fins must be >= 1")
        for v in (self.v_lrs, self.v_hrs):
            if v is not None and not (0 <= v <= self.v_dd):
                raise InvalidParams("cell voltage levels must lie in [0, V_DD]")

    @staticmethod
    def defaults(kind) -> "TopologyParams":
        kind = as_kind(kind)
        p = TopologyParams()
        p.sizing = dict(_SIZING.get(kind, {}))
        return p

    def fins(self, name: str) -> int:
        return self.sizing.get(name, 2)

    def device(self, name: str, polarity: str,
               extra_dvth: float = 0.0) -> FinFETParams:
        dvth = self.fet.delta_v_th + self.device_dvth.get(name, 0.0) \
            + extra_dvth
        return replace(self.fet, polarity=polarity, n_fin=self.fins(name),
                       delta_v_th=dvth)


@dataclass
class StimulusSchedule:
    """Named control-signal profiles plus the cell stimulus definition.

    ``signals`` maps voltage-source element names to their profiles;
    ``cell_levels`` holds the LRS/HRS stimulus values applied to
    ``cell_source`` (a source value, or a cell resistance for the
    conventional voltage topology)."""

    signals: dict[str, PWL]
    cell_kind: str | None             # "current" | "voltage" | "resistance"
    cell_source: str | None
    cell_levels: dict[str, float]
    t_cycle: float
    reset_signal: str | None
    reset_edge: str = "fall"
    output_node: str = "y"
    rise_fall: float = 2e-12
    # reset-phase node-voltage guess; the latch is bistable, so the t=0
    # operating point is selected by seeding Newton in the reset basin
    dc_guess: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.rise_fall <= 0:
            raise InvalidParams("rise/fall must be > 0")


def _step_profile(t_edge: float, before: float, after: float,
                  rise_fall: float) -> PWL:
    return PWL(((0.0, before), (t_edge, before), (t_edge + rise_fall, after)))


@functools.lru_cache(maxsize=256)
def mirror_gate_magnitude(fet: FinFETParams, current: float, v_dd: float,
                          tol: float = 1e-9) -> float:
    """|V_GS| at which a diode-connected device (V_DS = V_GS) carries
    ``current``; bisection over [0, 2*V_DD]."""
    probe = replace(fet, polarity="n")

    def f(v):
        return finfet_current(probe, v, v)[0] - current

    lo, hi = 0.0, 2.0 * v_dd
    if f(hi) < 0:
        raise InvalidParams(
            f"diode device cannot carry {current} A below {hi} V")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol:
            break
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _cell_gate_levels(kind: TopologyKind, p: TopologyParams):
    """LRS/HRS gate voltages the current mirror would produce."""
    vg_lrs = mirror_gate_magnitude(p.fet.with_(n_fin=6), p.i_lrs, p.v_dd)
    vg_hrs = mirror_gate_magnitude(p.fet.with_(n_fin=6), p.i_hrs, p.v_dd)
    if kind is TopologyKind.HP_VSA:
        lrs = p.v_lrs if p.v_lrs is not None else p.v_dd - vg_lrs
        hrs = p.v_hrs if p.v_hrs is not None else p.v_dd - vg_hrs
    else:
        lrs = p.v_lrs if p.v_lrs is not None else vg_lrs
        hrs = p.v_hrs if p.v_hrs is not None else vg_hrs
    return lrs, hrs


def default_schedule(kind, params: TopologyParams | None = None,
                     t_cycle: float = 500e-12, reset_end: float = 150e-12,
                     latch_at: float = 350e-12,
                     rise_fall: float = 2e-12) -> StimulusSchedule:
    """Three-phase cycle: reset asserted on [0, reset_end], sense phase, then
    the latch edge at ``latch_at``.  Cell stimulus is constant for the whole
    cycle."""
    kind = as_kind(kind)
    if kind not in SA_KINDS:
        raise InvalidParams(f"{kind.value} has no stimulus schedule")
    p = params or TopologyParams.defaults(kind)
    vdd = p.v_dd

    if kind in (TopologyKind.HP_CSA, TopologyKind.HP_VSA):
        signals = {
            "vd_en": _step_profile(reset_end, vdd, 0.0, rise_fall),
            "vl_en": _step_profile(latch_at, 0.0, vdd, rise_fall),
        }
        reset_signal, reset_edge = "vd_en", "fall"
    elif kind in (TopologyKind.HN_CSA, TopologyKind.HN_VSA):
        signals = {
            "vc_en": _step_profile(reset_end, 0.0, vdd, rise_fall),
            "vl_en": _step_profile(latch_at, vdd, 0.0, rise_fall),
        }
        reset_signal, reset_edge = "vc_en", "rise"
    elif kind is TopologyKind.CONV_VSA:
        signals = {
            "vpre": _step_profile(reset_end, vdd, 0.0, rise_fall),
            "vpre_n": _step_profile(reset_end, 0.0, vdd, rise_fall),
            "vwl": _step_profile(reset_end, 0.0, vdd, rise_fall),
            "vl_en": _step_profile(latch_at, 0.0, vdd, rise_fall),
        }
        reset_signal, reset_edge = "vpre", "fall"
    else:  # CONV_CSA
        signals = {
            "vpre": _step_profile(reset_end, vdd, 0.0, rise_fall),
            "vl_en": _step_profile(latch_at, 0.0, vdd, rise_fall),
        }
        reset_signal, reset_edge = "vpre", "fall"

    if is_csa(kind):
        cell_kind, cell_source = "current", "icell"
        levels = {"lrs": p.i_lrs, "hrs": p.i_hrs}
    elif kind is TopologyKind.CONV_VSA:
        v_pre = p.v_pre if p.v_pre is not None else vdd
        cell_kind, cell_source = "resistance", "rcell"
        levels = {"lrs": v_pre / p.i_lrs, "hrs": v_pre / p.i_hrs}
    else:
        cell_kind, cell_source = "voltage", "vcell"
        lrs, hrs = _cell_gate_levels(kind, p)
        levels = {"lrs": lrs, "hrs": hrs}

    if kind in (TopologyKind.HP_CSA, TopologyKind.HP_VSA):
        guess = {"vdd": vdd, "x": 0.0, "y": vdd, "sx": vdd}
    elif kind in (TopologyKind.HN_CSA, TopologyKind.HN_VSA):
        guess = {"vdd": vdd, "x": vdd, "y": 0.0, "sx": 0.0}
    elif kind is TopologyKind.CONV_VSA:
        guess = {"vdd": vdd, "x": 0.0, "y": vdd, "bl": vdd, "da": vdd}
    else:
        guess = {"vdd": vdd, "x": 0.0, "y": vdd, "da": vdd}

    return StimulusSchedule(signals, cell_kind, cell_source, levels, t_cycle,
                            reset_signal, reset_edge, "y", rise_fall, guess)


def apply_schedule(circuit: Circuit, schedule: StimulusSchedule) -> None:
    """Install the schedule's signal profiles on the named sources."""
    for name, profile in schedule.signals.items():
        if name not in circuit:
            raise InvalidParams(f"schedule signal {name!r} has no source")
        src = circuit[name]
        if not isinstance(src, VoltageSource):
            raise InvalidParams(f"schedule signal {name!r} is not a V source")
        src.value = profile


def initial_guess(circuit: Circuit, schedule: StimulusSchedule) -> SystemState:
    """Zero state seeded with the schedule's reset-phase node voltages."""
    state = SystemState.zeros(circuit)
    nodes = circuit.nodes
    for node, v in schedule.dc_guess.items():
        if node in nodes:
            state.voltages[nodes.index(node)] = v
    return state


def apply_cell(circuit: Circuit, schedule: StimulusSchedule, cell: str) -> None:
    """Set the cell stimulus for 'lrs' or 'hrs'."""
    cell = cell.lower()
    if cell not in ("lrs", "hrs"):
        raise InvalidParams(f"cell must be 'lrs' or 'hrs', not {cell!r}")
    if schedule.cell_source is None:
        raise InvalidParams("schedule has no cell stimulus")
    level = schedule.cell_levels[cell]
    el = circuit[schedule.cell_source]
    if schedule.cell_kind == "resistance":
        el.ohms = level
    else:
        el.value = level


def build_topology(kind, params: TopologyParams | None = None):
    """Wired circuit plus its default stimulus schedule.

    The returned circuit already carries the default schedule's profiles and
    the LRS cell stimulus; ``apply_schedule``/``apply_cell`` override them.
    """
    kind = as_kind(kind)
    p = params or TopologyParams.defaults(kind)
    if params is not None and not params.sizing:
        p = replace(params, sizing=dict(_SIZING.get(kind, {})),
                    device_dvth=dict(params.device_dvth))

    if kind is TopologyKind.BULK_PTM_FIXTURE:
        return _build_bulk_fixture(p), None
    if kind is TopologyKind.HYPERFET_FIXTURE:
        return _build_hyperfet_fixture(p), None

    schedule = default_schedule(kind, p)
    if kind in (TopologyKind.HP_CSA, TopologyKind.HP_VSA):
        ckt = _build_hyper_p(kind, p, schedule)
    elif kind in (TopologyKind.HN_CSA, TopologyKind.HN_VSA):
        ckt = _build_hyper_n(kind, p, schedule)
    elif kind is TopologyKind.CONV_VSA:
        ckt = _build_conv_vsa(p, schedule)
    else:
        ckt = _build_conv_csa(p, schedule)

    apply_schedule(ckt, schedule)
    apply_cell(ckt, schedule, "lrs")
    ckt.elaborate()
    return ckt, schedule


def _signal_nodes(ckt: Circuit, schedule: StimulusSchedule):
    """One source and node per control signal; node name drops the 'v'."""
    nodes = {}
    for name in schedule.signals:
        node = name[1:]
        ckt.add(VoltageSource(name, node, "0", 0.0))
        nodes[name] = node
    return nodes


def _build_hyper_p(kind: TopologyKind, p: TopologyParams,
                   schedule: StimulusSchedule) -> Circuit:
    """Hyper-PMOS sense amplifier (current or voltage mode).

    Mirror P1 converts the cell current to a gate voltage (CSA only); the
    Hyper-PMOS P2 (PTM in its source path to V_DD) charges node X once its
    gate drive triggers the PTM; N1 grounds X during reset; P4/N3 invert X
    into the output Y; P3 regeneratively holds X high once Y falls; keeper N4
    holds X low while Y is high; latch N2 reinforces the low X after the
    latch edge."""
    ckt = Circuit(kind.value, v_dd=p.v_dd, options=p.options)
    vdd = p.v_dd
    ckt.add(VoltageSource("vdd", "vdd", "0", vdd))
    nodes = _signal_nodes(ckt, schedule)

    if kind is TopologyKind.HP_CSA:
        ckt.add(FinFET("mp1", "g", "g", "vdd", p.device("mp1", "p")))
        ckt.add(CurrentSource("icell", "g", "0", p.i_lrs))
    else:
        ckt.add(VoltageSource("vcell", "g", "0", 0.0))

    ptm_top = "vdd"
    if p.t2:
        ckt.add(FinFET("mt2", "st2", "0", "vdd", p.device("mt2", "p")))
        ptm_top = "st2"
    ckt.add(PTM("ptm1", ptm_top, "sx", p.ptm))
    ckt.add(FinFET("mp2", "x", "g", "sx", p.device("mp2", "p")))
    if p.t1:
        ckt.add(FinFET("mt1", "x", "g", "sx", p.device("mt1", "p")))

    ckt.add(FinFET("mn1", "x", nodes["vd_en"], "0", p.device("mn1", "n")))
    ckt.add(FinFET("mp3", "x", "y", "vdd", p.device("mp3", "p")))
    ckt.add(FinFET("mp4", "y", "x", "vdd", p.device("mp4", "p")))
    ckt.add(FinFET("mn3", "y", "x", "0", p.device("mn3", "n")))
    ckt.add(FinFET("mn2", "x", nodes["vl_en"], "0", p.device("mn2", "n")))
    ckt.add(FinFET("mn4", "x", "y", "0", p.device("mn4", "n", KEEPER_DVTH)))
    ckt.add(Capacitor("c_x", "x", "0", p.c_x))
    ckt.add(Capacitor("c_y", "y", "0", p.c_y))
    return ckt


def _build_hyper_n(kind: TopologyKind, p: TopologyParams,
                   schedule: StimulusSchedule) -> Circuit:
    """Hyper-NMOS sense amplifier: the exact complement of the Hyper-PMOS
    build (polarities swapped, rails reflected, signals inverted)."""
    ckt = Circuit(kind.value, v_dd=p.v_dd, options=p.options)
    vdd = p.v_dd
    ckt.add(VoltageSource("vdd", "vdd", "0", vdd))
    nodes = _signal_nodes(ckt, schedule)

    if kind is TopologyKind.HN_CSA:
        ckt.add(FinFET("mn1", "g", "g", "0", p.device("mn1", "n")))
        ckt.add(CurrentSource("icell", "vdd", "g", p.i_lrs))
    else:
        ckt.add(VoltageSource("vcell", "g", "0", 0.0))

    ptm_bot = "0"
    if p.t2:
        ckt.add(FinFET("mt2", "st2", "vdd", "0", p.device("mt2", "n")))
        ptm_bot = "st2"
    ckt.add(PTM("ptm1", "sx", ptm_bot, p.ptm))
    ckt.add(FinFET("mn2", "x", "g", "sx", p.device("mn2", "n")))
    if p.t1:
        ckt.add(FinFET("mt1", "x", "g", "sx", p.device("mt1", "n")))

    ckt.add(FinFET("mp1", "x", nodes["vc_en"], "vdd", p.device("mp1", "p")))
    ckt.add(FinFET("mn3", "x", "y", "0", p.device("mn3", "n")))
    ckt.add(FinFET("mn4", "y", "x", "0", p.device("mn4", "n")))
    ckt.add(FinFET("mp3", "y", "x", "vdd", p.device("mp3", "p")))
    ckt.add(FinFET("mp2", "x", nodes["vl_en"], "vdd", p.device("mp2", "p")))
    ckt.add(FinFET("mp4", "x", "y", "vdd", p.device("mp4", "p", KEEPER_DVTH)))
    ckt.add(Capacitor("c_x", "x", "0", p.c_x))
    ckt.add(Capacitor("c_y", "y", "0", p.c_y))
    return ckt


def _build_conv_vsa(p: TopologyParams, schedule: StimulusSchedule) -> Circuit:
    """Conventional voltage sense amplifier: precharged bitline discharged
    (or not) by the cell resistance, compared against V_REF by a clocked
    mirror-loaded pair, then buffered."""
    ckt = Circuit("conv-vsa", v_dd=p.v_dd, options=p.options)
    vdd = p.v_dd
    v_pre = p.v_pre if p.v_pre is not None else vdd
    ckt.add(VoltageSource("vdd", "vdd", "0", vdd))
    nodes = _signal_nodes(ckt, schedule)
    ckt.add(VoltageSource("vref", "ref", "0", p.v_ref))

    ckt.add(FinFET("mp_pre", "bl", nodes["vpre_n"], "vdd",
                   p.device("mp_pre", "p")))
    ckt.add(Capacitor("c_bl", "bl", "0", p.c_bl))
    ckt.add(Resistor("rcell", "bl", "cell", v_pre / p.i_lrs))
    ckt.add(FinFET("mn_acc", "cell", nodes["vwl"], "0", p.device("mn_acc", "n")))

    ckt.add(FinFET("mn_ref", "da", "ref", "tail", p.device("mn_ref", "n")))
    ckt.add(FinFET("mn_in", "x", "bl", "tail", p.device("mn_in", "n")))
    ckt.add(FinFET("mn_tail", "tail", nodes["vl_en"], "0",
                   p.device("mn_tail", "n")))
    ckt.add(FinFET("mp_l1", "da", "da", "vdd", p.device("mp_l1", "p")))
    ckt.add(FinFET("mp_l2", "x", "da", "vdd", p.device("mp_l2", "p")))
    ckt.add(FinFET("mn_xrst", "x", nodes["vpre"], "0", p.device("mn_xrst", "n")))

    ckt.add(FinFET("mp_buf", "y", "x", "vdd", p.device("mp_buf", "p")))
    ckt.add(FinFET("mn_buf", "y", "x", "0", p.device("mn_buf", "n")))
    ckt.add(Capacitor("c_x", "x", "0", p.c_x))
    ckt.add(Capacitor("c_y", "y", "0", p.c_y))
    return ckt


def _build_conv_csa(p: TopologyParams, schedule: StimulusSchedule) -> Circuit:
    """Conventional current-mirror sense amplifier: the cell and reference
    currents run through diode converters, a clocked mirror-loaded pair
    compares the converted voltages, and a buffer restores the output."""
    ckt = Circuit("conv-csa", v_dd=p.v_dd, options=p.options)
    vdd = p.v_dd
    i_ref = p.i_ref if p.i_ref is not None else (p.i_lrs * p.i_hrs) ** 0.5
    ckt.add(VoltageSource("vdd", "vdd", "0", vdd))
    nodes = _signal_nodes(ckt, schedule)

    ckt.add(CurrentSource("icell", "vdd", "nc", p.i_lrs))
    ckt.add(FinFET("mn_mc", "nc", "nc", "0", p.device("mn_mc", "n")))
    ckt.add(CurrentSource("iref", "vdd", "nr", i_ref))
    ckt.add(FinFET("mn_mr", "nr", "nr", "0", p.device("mn_mr", "n")))

    ckt.add(FinFET("mn_ic", "da", "nc", "tail", p.device("mn_ic", "n")))
    ckt.add(FinFET("mn_ir", "x", "nr", "tail", p.device("mn_ir", "n")))
    ckt.add(FinFET("mn_tail", "tail", nodes["vl_en"], "0",
                   p.device("mn_tail", "n")))
    ckt.add(FinFET("mp_l1", "da", "da", "vdd", p.device("mp_l1", "p")))
    ckt.add(FinFET("mp_l2", "x", "da", "vdd", p.device("mp_l2", "p")))
    ckt.add(FinFET("mn_xrst", "x", nodes["vpre"], "0", p.device("mn_xrst", "n")))

    ckt.add(FinFET("mp_buf", "y", "x", "vdd", p.device("mp_buf", "p")))
    ckt.add(FinFET("mn_buf", "y", "x", "0", p.device("mn_buf", "n")))
    ckt.add(Capacitor("c_x", "x", "0", p.c_x))
    ckt.add(Capacitor("c_y", "y", "0", p.c_y))
    return ckt


def _build_bulk_fixture(p: TopologyParams) -> Circuit:
    """Swept source, series resistor, bulk PTM to ground."""
    ckt = Circuit("bulk-ptm-fixture", v_dd=p.v_dd, options=p.options)
    series = p.series_r if p.series_r is not None else p.ptm.r_met
    ckt.add(VoltageSource("v1", "in", "0", 0.0))
    ckt.add(Resistor("rs", "in", "p", series))
    ckt.add(PTM("ptm1", "p", "0", p.ptm))
    ckt.elaborate()
    return ckt


def _build_hyperfet_fixture(p: TopologyParams) -> Circuit:
    """Single FET with a PTM in its source path, gate and drain driven by
    independent sources; orientation follows ``params.fet.polarity``."""
    ckt = Circuit("hyperfet-fixture", v_dd=p.v_dd, options=p.options)
    fet = p.fet
    if fet.polarity == "n":
        ckt.add(VoltageSource("vg", "g", "0", 0.0))
        ckt.add(VoltageSource("vd", "d", "0", p.v_dd))
        ckt.add(FinFET("m1", "d", "g", "sx", fet))
        ckt.add(PTM("ptm1", "sx", "0", p.ptm))
    else:
        ckt.add(VoltageSource("vs", "vdd", "0", p.v_dd))
        ckt.add(VoltageSource("vg", "g", "0", p.v_dd))
        ckt.add(VoltageSource("vd", "d", "0", 0.0))
        ckt.add(PTM("ptm1", "vdd", "sx", p.ptm))
        ckt.add(FinFET("m1", "d", "g", "sx", fet))
    ckt.elaborate()
    return ckt


# Expected determinate outcome of the output node at cycle end, per kind and
# cell state.
EXPECTED_OUTCOME = {
    (TopologyKind.HP_CSA, "lrs"): "low",
    (TopologyKind.HP_CSA, "hrs"): "high",
    (TopologyKind.HP_VSA, "lrs"): "low",
    (TopologyKind.HP_VSA, "hrs"): "high",
    (TopologyKind.HN_CSA, "lrs"): "high",
    (TopologyKind.HN_CSA, "hrs"): "low",
    (TopologyKind.HN_VSA, "lrs"): "high",
    (TopologyKind.HN_VSA, "hrs"): "low",
    (TopologyKind.CONV_VSA, "lrs"): "low",
    (TopologyKind.CONV_VSA, "hrs"): "high",
    (TopologyKind.CONV_CSA, "lrs"): "low",
    (TopologyKind.CONV_CSA, "hrs"): "high",
}
