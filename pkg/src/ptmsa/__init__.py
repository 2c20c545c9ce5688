"""Compact circuit simulator and analysis toolkit for phase-transition-
material sense amplifiers: device models, a nonlinear MNA solver with
hysteretic state resolution, topology builders, study-level analyses, and a
Monte Carlo variation engine."""

from .circuit import (Capacitor, Circuit, CurrentSource, FinFET, PTM, PWL,
                      Resistor, SolverOptions, SystemState, VoltageSource)
from .devices import (FinFETParams, PTMParams, PTMState, finfet_current,
                      hyperfet_branch_solve, hyperfet_selectivity,
                      ptm_next_state, ptm_resistance)
from .solver import (StateEvent, TransientContext, TransientResult,
                     assemble_system, dc_element_powers, resolve_device_states,
                     run_transient, run_transient_fixed, solve_dc,
                     step_transient)
from .netlist import circuits_equal, parse_netlist, parse_number, print_netlist
from .topologies import (StimulusSchedule, TopologyKind, TopologyParams,
                         apply_cell, apply_schedule, build_topology,
                         default_schedule)
from .analysis import (MirrorWindow, SenseMetrics, StudySpec, StudyTable,
                       SweepResult, TransitionVoltages, dc_sweep_hysteretic,
                       extract_metrics, find_crossing, find_transition_voltages,
                       mirror_window, run_sense, sweep_study)
from .montecarlo import (McConfig, McSample, McSummary, ParameterDraw,
                         apply_draw, run_mc, sample_parameters, summarize)
from . import errors

__version__ = "0.1.0"

__all__ = [
    "Capacitor", "Circuit", "CurrentSource", "FinFET", "PTM", "PWL",
    "Resistor", "SolverOptions", "SystemState", "VoltageSource",
    "FinFETParams", "PTMParams", "PTMState", "finfet_current",
    "hyperfet_branch_solve", "hyperfet_selectivity", "ptm_next_state",
    "ptm_resistance",
    "StateEvent", "TransientContext", "TransientResult", "assemble_system",
    "dc_element_powers", "resolve_device_states", "run_transient",
    "run_transient_fixed", "solve_dc", "step_transient",
    "circuits_equal", "parse_netlist", "parse_number", "print_netlist",
    "StimulusSchedule", "TopologyKind", "TopologyParams", "apply_cell",
    "apply_schedule", "build_topology", "default_schedule",
    "MirrorWindow", "SenseMetrics", "StudySpec", "StudyTable", "SweepResult",
    "TransitionVoltages", "dc_sweep_hysteretic", "extract_metrics",
    "find_crossing", "find_transition_voltages", "mirror_window", "run_sense",
    "sweep_study",
    "McConfig", "McSample", "McSummary", "ParameterDraw", "apply_draw",
    "run_mc", "sample_parameters", "summarize",
    "errors",
]
