"""Study-level operations: hysteretic DC sweeps, transition-voltage and
mirror-window extraction, full sensing runs with outcome classification and
delay/power/PDP metrics, and multi-point parameter sweep studies."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .circuit import Circuit, VoltageSource
from .devices import (FinFETParams, PTMParams, PTMState, finfet_current,
                      hyperfet_branch_solve)
from .errors import InvalidParams, NoConsistentState, OutOfRange, StateChatter
from .solver import (StateEvent, TransientResult, compile_circuit,
                     run_transient)
from .topologies import (EXPECTED_OUTCOME, StimulusSchedule, TopologyKind,
                         TopologyParams, apply_cell, apply_schedule, as_kind,
                         build_topology, default_schedule, initial_guess,
                         is_csa, is_vsa)


@dataclass
class SweepResult:
    """Up/down DC sweep traces with the PTM state carried point to point."""

    axis: np.ndarray
    i_up: np.ndarray
    i_down: np.ndarray
    transitions: list[tuple[str, float, str, PTMState, PTMState]]
    states_up: list[tuple[str, ...]] = field(default_factory=list)
    states_down: list[tuple[str, ...]] = field(default_factory=list)

    def transition_values(self, direction: str) -> list[float]:
        return [v for d, v, *_ in self.transitions if d == direction]


def dc_sweep_hysteretic(circuit: Circuit, source: str, lo: float, hi: float,
                        n_points: int, measure: str | None = None) -> SweepResult:
    """Sweep a voltage source lo -> hi -> lo, carrying PTM states between
    consecutive points (no re-initialization), recording a branch current and
    every state flip.  ``measure`` names the voltage source whose branch
    current is recorded (the swept source itself by default; gate sweeps
    measure the drain supply instead)."""
    if n_points < 3:
        raise ValueError("n_points must be >= 3")
    if source not in circuit:
        raise InvalidParams(f"no source named {source!r}")
    src = circuit[source]
    if not isinstance(src, VoltageSource):
        raise InvalidParams(f"{source!r} is not a voltage source")
    meter = circuit[measure] if measure is not None else src
    if not isinstance(meter, VoltageSource):
        raise InvalidParams(f"{measure!r} is not a voltage source")

    eng = compile_circuit(circuit)
    branch_row = eng.n_nodes + eng.vsources.index(meter)
    axis = np.linspace(lo, hi, n_points)
    states = circuit.initial_ptm_states()
    x = np.zeros(eng.dim)
    transitions: list[tuple[str, float, str, PTMState, PTMState]] = []

    def solve_at(value: float, direction: str):
        nonlocal x, states
        src.value = value
        try:
            x, states, flips = eng.solve_consistent(x, 0.0, states, None,
                                                    dc_fallback=True,
                                                    strict=True)
        except (StateChatter, NoConsistentState) as exc:
            raise NoConsistentState(
                f"no consistent PTM state at sweep value {value}") from exc
        for name, before, after in flips:
            transitions.append((direction, value, name, before, after))
        return float(x[branch_row])

    i_up = np.array([solve_at(v, "up") for v in axis])
    i_down = np.array([solve_at(v, "down") for v in axis[::-1]])[::-1]
    return SweepResult(axis, i_up, i_down, transitions)


@dataclass
class TransitionVoltages:
    """Hyper-FET transition points (gate-drive magnitudes) with the bisection
    bracket width of each extraction; None marks a condition that never fires
    inside [0, V_DD]."""

    v_gs_imt: float | None
    v_gs_mit: float | None
    v_ds_imt: float | None
    v_gs_imt_bracket: float | None
    v_gs_mit_bracket: float | None
    v_ds_imt_bracket: float | None

    @property
    def not_reachable(self) -> tuple[str, ...]:
        out = []
        if self.v_gs_imt is None:
            out.append("v_gs_imt")
        if self.v_gs_mit is None:
            out.append("v_gs_mit")
        if self.v_ds_imt is None:
            out.append("v_ds_imt")
        return tuple(out)


def _branch(fet: FinFETParams, ptm: PTMParams, state: PTMState, vg_mag: float,
            vd_mag: float, v_dd: float):
    """Hyper branch observables at gate/drain drive magnitudes; handles both
    polarities by mirroring around the supply rail."""
    if fet.polarity == "n":
        i, v_int = hyperfet_branch_solve(fet, ptm, state, vg_mag, vd_mag, 0.0)
        v_ptm = v_int - 0.0
    else:
        i, v_int = hyperfet_branch_solve(fet, ptm, state, v_dd - vg_mag,
                                         v_dd - vd_mag, v_dd)
        v_ptm = v_int - v_dd
    return abs(i), abs(v_ptm)


def _bisect_increasing(f, lo: float, hi: float, tol: float):
    """Root of an increasing scalar condition; returns (root, bracket) or
    (None, None) when the condition never fires on [lo, hi]."""
    if f(hi) < 0:
        return None, None
    if f(lo) >= 0:
        return lo, 0.0
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), hi - lo


def find_transition_voltages(fet: FinFETParams, ptm: PTMParams, v_dd: float,
                             tol: float = 1e-5) -> TransitionVoltages:
    """Transition gate/drain voltages of the composite branch.

    V_GS_IMT: smallest gate drive (at full drain bias) whose insulating-state
    PTM voltage reaches V_C_IMT.  V_GS_MIT: gate drive at which the metallic
    branch current falls to I_C_MIT.  V_DS_IMT: smallest drain bias (at full
    gate drive) that triggers the insulating-state transition."""
    if tol <= 0:
        raise ValueError("tol must be > 0")

    def imt_cond(vg):
        _, v_ptm = _branch(fet, ptm, PTMState.INSULATING, vg, v_dd, v_dd)
        return v_ptm - ptm.v_c_imt

    def mit_cond(vg):
        i, _ = _branch(fet, ptm, PTMState.METALLIC, vg, v_dd, v_dd)
        return i - ptm.i_c_mit

    def vds_cond(vd):
        _, v_ptm = _branch(fet, ptm, PTMState.INSULATING, v_dd, vd, v_dd)
        return v_ptm - ptm.v_c_imt

    v_imt, b_imt = _bisect_increasing(imt_cond, 0.0, v_dd, tol)
    v_mit, b_mit = _bisect_increasing(mit_cond, 0.0, v_dd, tol)
    v_ds, b_ds = _bisect_increasing(vds_cond, 0.0, v_dd, tol)
    if v_mit is None:
        # metallic branch never reaches I_C_MIT: the state releases at the
        # full rail, so the hysteresis collapses at the top of the range
        v_mit, b_mit = v_dd, 0.0
    return TransitionVoltages(v_imt, v_mit, v_ds, b_imt, b_mit, b_ds)


@dataclass
class MirrorWindow:
    """Diode-mirror gate-node voltages for the two cell current levels."""

    v_gs_lrs: float
    v_gs_hrs: float

    @property
    def center(self) -> float:
        return 0.5 * (self.v_gs_lrs + self.v_gs_hrs)

    @property
    def size(self) -> float:
        return abs(self.v_gs_lrs - self.v_gs_hrs)


def mirror_window(mirror: FinFETParams, i_lrs: float, i_hrs: float,
                  v_dd: float, tol: float = 1e-9) -> MirrorWindow:
    """Invert the diode-connected device equation I(V_GS, V_DS=V_GS) = I_cell
    for both current levels.  Gate-node voltages are reported: |V_GS| for an
    n-type mirror, V_DD - |V_GS| for a p-type mirror (its source sits at the
    supply)."""
    if not (i_lrs >= i_hrs > 0):
        raise InvalidParams("require I_LRS >= I_HRS > 0")
    probe = replace(mirror, polarity="n")

    def invert(i_target: float) -> float:
        def f(v):
            return finfet_current(probe, v, v)[0] - i_target
        if f(v_dd) < 0:
            raise OutOfRange(
                f"diode current {i_target} A not reachable at V_GS = {v_dd} V")
        lo, hi = 0.0, v_dd
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if f(mid) < 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    m_lrs = invert(i_lrs)
    m_hrs = invert(i_hrs)
    if mirror.polarity == "p":
        return MirrorWindow(v_dd - m_lrs, v_dd - m_hrs)
    return MirrorWindow(m_lrs, m_hrs)


@dataclass
class SenseMetrics:
    """Per-run sensing figures: 50%-to-50% delay, cycle-average source power,
    their product, the output classification, and the PTM event log.  A None
    delay records that the output never crossed its deciding 50% level."""

    delay: float | None
    sensing_power: float
    pdp: float | None
    logic_outcome: str
    events: list[StateEvent]

    @property
    def imt_times(self) -> list[float]:
        return [e.time for e in self.events if e.kind == "IMT"]

    @property
    def mit_times(self) -> list[float]:
        return [e.time for e in self.events if e.kind == "MIT"]


def find_crossing(times: np.ndarray, values: np.ndarray, level: float,
                  direction: str) -> float | None:
    """First linear-interpolated crossing of ``level`` in the given
    direction ('rise' or 'fall')."""
    v = np.asarray(values)
    if direction == "rise":
        hit = (v[:-1] < level) & (v[1:] >= level)
    else:
        hit = (v[:-1] > level) & (v[1:] <= level)
    idx = np.nonzero(hit)[0]
    if not len(idx):
        return None
    i = int(idx[0])
    v0, v1 = float(v[i]), float(v[i + 1])
    t0, t1 = float(times[i]), float(times[i + 1])
    if v1 == v0:
        return t1
    return t0 + (t1 - t0) * (level - v0) / (v1 - v0)


def extract_metrics(result: TransientResult, schedule: StimulusSchedule,
                    kind, v_dd: float = 0.8) -> SenseMetrics:
    """Delay, sensing power and PDP from one full-cycle run.

    Delay spans the 50% crossing of the reset signal's de-asserting edge to
    the 50% crossing of the output's deciding edge (the direction the output
    moves when sensing LRS).  Power averages the supply-delivered power over
    the cycle; the cell source is excluded for voltage-mode kinds."""
    kind = as_kind(kind)
    times = result.times
    half = 0.5 * v_dd

    reset_node = schedule.reset_signal[1:]
    t_reset = find_crossing(times, result.voltage(reset_node), half,
                            schedule.reset_edge)

    out_direction = ("fall" if EXPECTED_OUTCOME[(kind, "lrs")] == "low"
                     else "rise")
    y = result.voltage(schedule.output_node)
    t_out = None
    if t_reset is not None:
        after = times >= t_reset
        t_out = find_crossing(times[after], y[after], half, out_direction)

    delay = (t_out - t_reset) if (t_out is not None and t_reset is not None) \
        else None

    excluded = set()
    if is_vsa(kind) and schedule.cell_kind == "voltage":
        excluded.add(schedule.cell_source)
    delivered = _delivered_power(result, excluded)
    t_cycle = schedule.t_cycle
    energy = float(np.trapezoid(delivered, times)) if len(times) > 1 else 0.0
    power = energy / t_cycle

    v_end = float(y[-1])
    if v_end > 0.9 * v_dd:
        outcome = "high"
    elif v_end < 0.1 * v_dd:
        outcome = "low"
    else:
        outcome = "indeterminate"

    pdp = delay * power if delay is not None else None
    return SenseMetrics(delay, power, pdp, outcome, list(result.events))


def _delivered_power(result: TransientResult, excluded: set[str]) -> np.ndarray:
    total = np.zeros_like(result.times)
    for name, meta in result.vsource_meta.items():
        if name in excluded:
            continue
        pos, neg = meta
        v = result.voltage(pos) - result.voltage(neg)
        total = total - v * result.currents[name]
    return total


def run_sense(kind, cell: str, params: TopologyParams | None = None,
              schedule: StimulusSchedule | None = None):
    """Build the topology, apply the stimulus, run one full cycle, classify
    the outcome and extract metrics.  Returns (TransientResult, SenseMetrics)."""
    kind = as_kind(kind)
    circuit, default_sched = build_topology(kind, params)
    sched = schedule or default_sched
    if sched is None:
        raise InvalidParams(f"{kind.value} is not a sense-amplifier topology")
    if is_csa(kind) and sched.cell_kind != "current":
        raise InvalidParams("current-mode topologies need a current stimulus")
    if is_vsa(kind) and sched.cell_kind == "current":
        raise InvalidParams("voltage-mode topologies cannot take a current "
                            "stimulus")
    apply_schedule(circuit, sched)
    apply_cell(circuit, sched, cell)
    result = run_transient(circuit, None, sched.t_cycle,
                           initial=initial_guess(circuit, sched))
    metrics = extract_metrics(result, sched, kind, circuit.v_dd)
    return result, metrics


@dataclass
class StudySpec:
    """One sweep study: a named quantity evaluated on an axis grid for a set
    of fin counts and device polarities."""

    study: str                       # window-vs-dvth | imt-vs-dvth |
                                     # mit-vs-dvth | vds-imt-vs-dvth |
                                     # imt-vs-rhoins
    axis: tuple[float, ...]
    n_fins: tuple[int, ...] = (2, 6)
    polarities: tuple[str, ...] = ("n", "p")
    fet: FinFETParams = field(default_factory=FinFETParams)
    ptm: PTMParams = field(default_factory=PTMParams)
    v_dd: float = 0.8
    # window-study cell levels; smaller than the SA stimulus defaults so the
    # diode inversion stays inside the rail over the whole threshold range
    i_lrs: float = 20e-6
    i_hrs: float = 2e-6
    tol: float = 1e-6


STUDY_KINDS = ("window-vs-dvth", "imt-vs-dvth", "mit-vs-dvth",
               "vds-imt-vs-dvth", "imt-vs-rhoins")


@dataclass
class StudyTable:
    columns: tuple[str, ...]
    rows: list[tuple]


def sweep_study(spec: StudySpec) -> StudyTable:
    """One row per (axis value, n_fin, polarity); per-point failures are
    recorded in the status column and never abort the study."""
    if spec.study not in STUDY_KINDS:
        raise InvalidParams(f"unknown study {spec.study!r}")
    axis = list(spec.axis)
    if not axis or any(b <= a for a, b in zip(axis, axis[1:])):
        raise InvalidParams("axis grid must be non-empty and increasing")

    if spec.study == "window-vs-dvth":
        columns = ("study", "polarity", "n_fin", "axis", "center_v", "size_v",
                   "status")
    else:
        columns = ("study", "polarity", "n_fin", "axis", "value_v",
                   "bracket_v", "status")
    rows: list[tuple] = []
    for pol in spec.polarities:
        for n_fin in spec.n_fins:
            fet = replace(spec.fet, polarity=pol, n_fin=n_fin)
            for a in axis:
                rows.append(_study_point(spec, fet, pol, n_fin, a))
    return StudyTable(columns, rows)


def _study_point(spec: StudySpec, fet: FinFETParams, pol: str, n_fin: int,
                 a: float) -> tuple:
    study = spec.study
    try:
        if study == "window-vs-dvth":
            win = mirror_window(replace(fet, delta_v_th=a), spec.i_lrs,
                                spec.i_hrs, spec.v_dd, spec.tol)
            return (study, pol, n_fin, a, win.center, win.size, "ok")
        if study == "imt-vs-rhoins":
            tv = find_transition_voltages(fet, spec.ptm.with_rho_ins_factor(a),
                                          spec.v_dd, spec.tol)
            value, bracket = tv.v_gs_imt, tv.v_gs_imt_bracket
        else:
            tv = find_transition_voltages(replace(fet, delta_v_th=a),
                                          spec.ptm, spec.v_dd, spec.tol)
            value, bracket = {
                "imt-vs-dvth": (tv.v_gs_imt, tv.v_gs_imt_bracket),
                "mit-vs-dvth": (tv.v_gs_mit, tv.v_gs_mit_bracket),
                "vds-imt-vs-dvth": (tv.v_ds_imt, tv.v_ds_imt_bracket),
            }[study]
        if value is None:
            return (study, pol, n_fin, a, "", "", "not-reachable")
        return (study, pol, n_fin, a, value, bracket, "ok")
    except (OutOfRange, NoConsistentState) as exc:
        return (study, pol, n_fin, a, "", "", f"error: {exc}")
