"""Batch command-line front-end.

Subcommands: ``dc`` (operating point -> JSON), ``tran`` (waveforms -> CSV),
``sweep`` (hysteretic DC sweep or parameter study -> CSV), ``sense`` (one
sensing cycle -> CSV + JSON), ``transitions`` (-> JSON), ``window``
(-> JSON), ``mc`` (per-sample CSV + summary JSON).

Exit codes: 0 success, 1 user error, 2 solver error.  Output files are
written to a temporary name and renamed on completion, so no partial files
are ever left behind.  ``--set key=value`` overrides topology parameters
with dotted paths (``ptm.v_c_imt=0.35``, ``fet.n_fin=4``, ``sizing.p1=8``,
``schedule.latch_at=300p``); the last flag wins.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import analysis, montecarlo
from .errors import (AllSamplesFailed, BracketFailure, DuplicateName,
                     InvalidParams, NewtonDivergence, NoConsistentState,
                     OutOfRange, ParseError, SimulationError,
                     SingularStructure, StateChatter, StepFailure,
                     UnknownNode)
from .netlist import parse_netlist, parse_number
from .solver import TransientResult, run_transient, solve_dc
from .topologies import (TopologyKind, TopologyParams, as_kind,
                         build_topology, default_schedule)

SCHEMA_VERSION = "1"

_USER_ERRORS = (ParseError, DuplicateName, UnknownNode, InvalidParams,
                OutOfRange, ValueError, KeyError, FileNotFoundError,
                IsADirectoryError)
_SOLVER_ERRORS = (NewtonDivergence, NoConsistentState, StateChatter,
                  StepFailure, BracketFailure, SingularStructure,
                  AllSamplesFailed)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{message}\n{self.format_usage()}")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path: str, header: list[str], rows) -> None:
    import io
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    _write_text(path, buf.getvalue())


def _write_json(path: str, payload: dict) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _parse_value(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    num = parse_number(text)
    if num is not None:
        return num
    return low


def apply_overrides(params: TopologyParams, sets: list[str]):
    """Apply dotted-path overrides; returns (params, schedule_kwargs,
    mc_kwargs)."""
    sched_kwargs: dict[str, float] = {}
    mc_kwargs: dict[str, object] = {}
    for item in sets:
        if "=" not in item:
            raise InvalidParams(f"--set needs key=value, got {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip().lower()
        value = _parse_value(raw.strip())
        if key.startswith("fet."):
            fname = key[4:]
            if fname == "n_fin":
                value = int(value)
            params = dataclasses.replace(params,
                                         fet=params.fet.with_(**{fname: value}))
        elif key.startswith("ptm."):
            params = dataclasses.replace(params,
                                         ptm=params.ptm.with_(**{key[4:]: value}))
        elif key.startswith("sizing."):
            params.sizing[key[7:]] = int(value)
        elif key.startswith("schedule."):
            sched_kwargs[key[9:]] = float(value)
        elif key.startswith("mc."):
            if key == "mc.vary":
                mc_kwargs["vary"] = tuple(str(value).split("+"))
            else:
                mc_kwargs[key[3:]] = value
        elif key in ("t1", "t2"):
            params = dataclasses.replace(params, **{key: bool(value)})
        else:
            if not hasattr(params, key):
                raise InvalidParams(f"unknown parameter {key!r}")
            params = dataclasses.replace(params, **{key: value})
    return params, sched_kwargs, mc_kwargs


def _load_circuit(args, params: TopologyParams):
    if (args.netlist is None) == (args.topology is None):
        raise InvalidParams("exactly one of --netlist or --topology required")
    if args.netlist:
        with open(args.netlist, "r", encoding="utf-8") as fh:
            circuit = parse_netlist(fh.read())
        schedule = None
        name = os.path.splitext(os.path.basename(args.netlist))[0]
    else:
        kind = as_kind(args.topology)
        circuit, schedule = build_topology(kind, params)
        name = kind.value
    if args.method:
        method = {"be": "backward-euler", "trap": "trapezoidal"}[args.method]
        circuit.options = circuit.options.with_(integration_method=method)
    return circuit, schedule, name


def _write_waveforms(path: str, result: TransientResult) -> None:
    node_names = sorted(result.voltages)
    cur_names = sorted(result.currents)
    header = (["time_s"] + [f"v({n})" for n in node_names]
              + [f"i({n})" for n in cur_names])
    rows = []
    for k in range(len(result.times)):
        row = [float(result.times[k])]
        row += [float(result.voltages[n][k]) for n in node_names]
        row += [float(result.currents[n][k]) for n in cur_names]
        rows.append(row)
    _write_csv(path, header, rows)


def _metrics_payload(metrics: analysis.SenseMetrics) -> dict:
    return {
        "kind": "sense-metrics",
        "delay_s": metrics.delay,
        "sensing_power_w": metrics.sensing_power,
        "pdp_ws": metrics.pdp,
        "logic_outcome": metrics.logic_outcome,
        "events": [
            {"time_s": e.time, "element": e.element, "kind": e.kind}
            for e in metrics.events
        ],
    }


def _cmd_dc(args, out_dir: str) -> list[str]:
    params, _, _ = apply_overrides(_params_for(args), args.set)
    circuit, _, name = _load_circuit(args, params)
    state = solve_dc(circuit)
    payload = {
        "kind": "dc",
        "nodes": {n: state.voltage(circuit, n) for n in circuit.nodes},
        "branch_currents_a": {vs.name: float(state.branch_currents[j])
                              for j, vs in enumerate(circuit.voltage_sources)},
        "ptm_states": {k: v.value for k, v in state.ptm_states.items()},
    }
    path = os.path.join(out_dir, f"dc_{name}.json")
    _write_json(path, payload)
    return [path]


def _cmd_tran(args, out_dir: str) -> list[str]:
    params, sched_kwargs, _ = apply_overrides(_params_for(args), args.set)
    circuit, schedule, name = _load_circuit(args, params)
    if args.tstop is not None:
        t_end = args.tstop
    elif schedule is not None:
        t_end = schedule.t_cycle
    else:
        raise InvalidParams("--tstop required for netlist transients")
    if schedule is not None and sched_kwargs:
        schedule = default_schedule(as_kind(args.topology), params,
                                    **sched_kwargs)
        t_end = schedule.t_cycle if args.tstop is None else t_end
    result = run_transient(circuit, schedule, t_end)
    path = os.path.join(out_dir, f"tran_{name}.csv")
    _write_waveforms(path, result)
    return [path]


def _cmd_sense(args, out_dir: str) -> list[str]:
    if args.topology is None:
        raise InvalidParams("sense requires --topology")
    if args.cell is None:
        raise InvalidParams("sense requires --cell lrs|hrs")
    params, sched_kwargs, _ = apply_overrides(_params_for(args), args.set)
    kind = as_kind(args.topology)
    schedule = default_schedule(kind, params, **sched_kwargs)
    if args.method:
        method = {"be": "backward-euler", "trap": "trapezoidal"}[args.method]
        params = dataclasses.replace(
            params, options=params.options.with_(integration_method=method))
    result, metrics = analysis.run_sense(kind, args.cell, params, schedule)
    base = os.path.join(out_dir, f"sense_{kind.value}_{args.cell}")
    _write_waveforms(base + ".csv", result)
    _write_json(base + ".json", _metrics_payload(metrics))
    return [base + ".csv", base + ".json"]


def _cmd_sweep(args, out_dir: str) -> list[str]:
    params, _, _ = apply_overrides(_params_for(args), args.set)
    if args.study:
        axis = _parse_axis(args.axis)
        fins = tuple(int(f) for f in args.fins.split(","))
        kwargs = {}
        explicit = {item.partition("=")[0].strip().lower()
                    for item in args.set}
        if "i_lrs" in explicit:
            kwargs["i_lrs"] = params.i_lrs
        if "i_hrs" in explicit:
            kwargs["i_hrs"] = params.i_hrs
        spec = analysis.StudySpec(
            study=args.study, axis=axis, n_fins=fins,
            polarities=tuple(args.polarity.split(",")),
            fet=params.fet, ptm=params.ptm, v_dd=params.v_dd, **kwargs)
        table = analysis.sweep_study(spec)
        path = os.path.join(out_dir, f"study_{args.study}.csv")
        _write_csv(path, list(table.columns), table.rows)
        return [path]
    circuit, _, name = _load_circuit(args, params)
    if not args.source:
        raise InvalidParams("sweep needs --study or --source")
    result = analysis.dc_sweep_hysteretic(circuit, args.source,
                                          args.sweep_from, args.sweep_to,
                                          args.points)
    path = os.path.join(out_dir, f"sweep_{name}_{args.source}.csv")
    rows = []
    for k in range(len(result.axis)):
        rows.append([float(result.axis[k]), float(result.i_up[k]),
                     float(result.i_down[k])])
    _write_csv(path, ["axis_v", "i_up_a", "i_down_a"], rows)
    return [path]


def _cmd_transitions(args, out_dir: str) -> list[str]:
    params, _, _ = apply_overrides(_params_for(args), args.set)
    fet = params.fet.with_(polarity=args.polarity,
                           n_fin=int(args.fins.split(",")[0]))
    tv = analysis.find_transition_voltages(fet, params.ptm, params.v_dd,
                                           args.tol)
    payload = {
        "kind": "transitions",
        "polarity": args.polarity,
        "n_fin": fet.n_fin,
        "v_gs_imt_v": tv.v_gs_imt,
        "v_gs_mit_v": tv.v_gs_mit,
        "v_ds_imt_v": tv.v_ds_imt,
        "bracket_v": {"v_gs_imt": tv.v_gs_imt_bracket,
                      "v_gs_mit": tv.v_gs_mit_bracket,
                      "v_ds_imt": tv.v_ds_imt_bracket},
        "not_reachable": list(tv.not_reachable),
    }
    path = os.path.join(out_dir, f"transitions_{args.polarity}.json")
    _write_json(path, payload)
    return [path]


def _cmd_window(args, out_dir: str) -> list[str]:
    params, _, _ = apply_overrides(_params_for(args), args.set)
    fet = params.fet.with_(polarity=args.polarity,
                           n_fin=int(args.fins.split(",")[0]))
    win = analysis.mirror_window(fet, params.i_lrs, params.i_hrs,
                                 params.v_dd, args.tol)
    payload = {
        "kind": "window",
        "polarity": args.polarity,
        "n_fin": fet.n_fin,
        "v_gs_lrs_v": win.v_gs_lrs,
        "v_gs_hrs_v": win.v_gs_hrs,
        "center_v": win.center,
        "size_v": win.size,
    }
    path = os.path.join(out_dir, f"window_{args.polarity}.json")
    _write_json(path, payload)
    return [path]


def _cmd_mc(args, out_dir: str) -> list[str]:
    if args.topology is None:
        raise InvalidParams("mc requires --topology")
    params, _, mc_kwargs = apply_overrides(_params_for(args), args.set)
    kind = as_kind(args.topology)
    cfg_kwargs = dict(n_samples=args.samples, master_seed=args.seed,
                      workers=args.workers)
    for k, v in mc_kwargs.items():
        cfg_kwargs[k] = v
    config = montecarlo.McConfig(**cfg_kwargs)
    samples = montecarlo.run_mc(kind, config, params)
    summary = montecarlo.summarize(samples)

    draw_keys: list[str] = []
    for s in samples:
        for k in s.draw.as_dict():
            if k not in draw_keys:
                draw_keys.append(k)
    header = (["index"] + draw_keys
              + ["delay_s", "sensing_power_w", "pdp_ws", "outcome_lrs",
                 "outcome_hrs", "error"])
    rows = []
    for s in samples:
        d = s.draw.as_dict()
        row: list = [s.index] + [d.get(k, "") for k in draw_keys]
        if s.metrics is not None:
            row += [s.metrics.delay if s.metrics.delay is not None else "",
                    s.metrics.sensing_power,
                    s.metrics.pdp if s.metrics.pdp is not None else "",
                    s.metrics.logic_outcome]
        else:
            row += ["", "", "", ""]
        row += [s.outcome_hrs or "", s.error or ""]
        rows.append(row)
    base = os.path.join(out_dir, f"mc_{kind.value}")
    _write_csv(base + "_samples.csv", header, rows)

    payload = {
        "kind": "mc-summary",
        "topology": kind.value,
        "n_samples": summary.n_samples,
        "n_failed": summary.n_failed,
        "master_seed": args.seed,
        "metrics": {
            name: {
                "mean": st.mean,
                "std": st.std,
                "worst": st.worst,
                "histogram": {"bin_edges": list(st.bin_edges),
                              "counts": list(st.counts)},
            }
            for name, st in summary.metrics.items()
        },
    }
    _write_json(base + "_summary.json", payload)
    return [base + "_samples.csv", base + "_summary.json"]


def _params_for(args) -> TopologyParams:
    if getattr(args, "topology", None):
        return TopologyParams.defaults(as_kind(args.topology))
    return TopologyParams()


def _parse_axis(text: str) -> tuple[float, ...]:
    parts = text.split(":")
    if len(parts) != 3:
        raise InvalidParams("--axis needs lo:hi:n")
    lo, hi = float(parse_number(parts[0])), float(parse_number(parts[1]))
    n = int(parts[2])
    return tuple(np.linspace(lo, hi, n))


def build_parser() -> _Parser:
    parser = _Parser(prog="ptmsa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, cell=False, samples=False):
        p.add_argument("--topology",
                       choices=[k.value for k in TopologyKind])
        p.add_argument("--netlist")
        p.add_argument("--set", action="append", default=[],
                       metavar="KEY=VALUE")
        p.add_argument("--out", default=None)
        p.add_argument("--method", choices=["be", "trap"])
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        if cell:
            p.add_argument("--cell", choices=["lrs", "hrs"])
        if samples:
            p.add_argument("--samples", type=int, default=1000)

    common(sub.add_parser("dc", help="operating point -> JSON"))
    p_tran = sub.add_parser("tran", help="transient waveforms -> CSV")
    common(p_tran)
    p_tran.add_argument("--tstop", type=lambda s: float(parse_number(s)))
    p_sense = sub.add_parser("sense", help="one sensing cycle -> CSV + JSON")
    common(p_sense, cell=True)
    p_sweep = sub.add_parser("sweep", help="DC sweep or study -> CSV")
    common(p_sweep)
    p_sweep.add_argument("--study", choices=list(analysis.STUDY_KINDS))
    p_sweep.add_argument("--axis", default="-0.1:0.1:5")
    p_sweep.add_argument("--fins", default="2,6")
    p_sweep.add_argument("--polarity", default="n,p")
    p_sweep.add_argument("--source")
    p_sweep.add_argument("--from", dest="sweep_from", default=0.0,
                         type=lambda s: float(parse_number(s)))
    p_sweep.add_argument("--to", dest="sweep_to", default=0.8,
                         type=lambda s: float(parse_number(s)))
    p_sweep.add_argument("--points", type=int, default=161)
    p_trans = sub.add_parser("transitions", help="transition voltages -> JSON")
    common(p_trans)
    p_trans.add_argument("--polarity", choices=["n", "p"], default="n")
    p_trans.add_argument("--fins", default="6")
    p_trans.add_argument("--tol", type=float, default=1e-5)
    p_win = sub.add_parser("window", help="mirror window -> JSON")
    common(p_win)
    p_win.add_argument("--polarity", choices=["n", "p"], default="n")
    p_win.add_argument("--fins", default="6")
    p_win.add_argument("--tol", type=float, default=1e-9)
    p_mc = sub.add_parser("mc", help="Monte Carlo batch -> CSV + JSON")
    common(p_mc, cell=True, samples=True)
    return parser


_COMMANDS = {
    "dc": _cmd_dc,
    "tran": _cmd_tran,
    "sense": _cmd_sense,
    "sweep": _cmd_sweep,
    "transitions": _cmd_transitions,
    "window": _cmd_window,
    "mc": _cmd_mc,
}


def execute(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        out_dir = args.out or os.environ.get("PTMSA_OUT", ".")
        os.makedirs(out_dir, exist_ok=True)
        paths = _COMMANDS[args.command](args, out_dir)
    except _UsageError as exc:
        print(f"ptmsa: error: {exc}", file=sys.stderr)
        return 1
    except _USER_ERRORS as exc:
        print(f"ptmsa: error: {exc}", file=sys.stderr)
        return 1
    except _SOLVER_ERRORS as exc:
        print(f"ptmsa: solver error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"ptmsa: solver error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


def main() -> None:
    raise SystemExit(execute(sys.argv[1:]))


if __name__ == "__main__":
    main()
