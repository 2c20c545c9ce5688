"""Nonlinear circuit solver: modified nodal analysis with Newton iteration,
DC operating point with source stepping, and implicit transient integration
(backward-Euler or trapezoidal) with consistent resolution of discrete PTM
states.

Unknown vector layout: non-ground node voltages first (``circuit.nodes``
order), then one branch current per voltage source.  Residual convention:
each node row is the sum of currents *leaving* the node; each branch row is
the source's voltage equation.

PTM elements are stamped as linear resistors at the resistance implied by
their frozen discrete state.  After every converged solve the transition
rules are re-evaluated; a changed state forces a re-solve until the
assignment is a fixed point.  In transient runs a state flip additionally
forces the step size down to ``dt_min`` so the event time is resolved to
within one minimum step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuit import (GROUND, Capacitor, Circuit, CurrentSource, FinFET, PTM,
                      PWL, Resistor, SystemState, VoltageSource, eval_profile)
from .devices import PTMState, ptm_next_state, ptm_resistance
from .errors import (NewtonDivergence, NoConsistentState, StateChatter,
                     StepFailure)

# Snap tolerance for landing on breakpoints (attoseconds; far below dt_min).
_T_SNAP = 1e-18

# Largest node-voltage change accepted in one adaptive step; larger moves are
# re-integrated at a smaller dt to keep fast edges resolved.
DV_MAX_STEP = 0.4


@dataclass
class TransientContext:
    """Companion-model context for one implicit step.

    ``cap_voltages``/``cap_currents`` are the capacitor branch voltages and
    currents at the previous accepted time, ordered like the circuit's
    capacitor list.
    """

    dt: float
    cap_voltages: np.ndarray
    cap_currents: np.ndarray
    method: str = "backward-euler"


@dataclass
class StateEvent:
    time: float
    element: str
    before: PTMState
    after: PTMState

    @property
    def kind(self) -> str:
        return "IMT" if self.after is PTMState.METALLIC else "MIT"


@dataclass
class TransientResult:
    """Sampled waveforms at every accepted step."""

    times: np.ndarray
    voltages: dict[str, np.ndarray]
    currents: dict[str, np.ndarray]
    ptm_states: dict[str, np.ndarray]      # arrays of "ins"/"met"
    events: list[StateEvent]
    final_state: SystemState
    step_sizes: np.ndarray = field(default_factory=lambda: np.empty(0))
    # positive/negative terminal node of each voltage source, for power
    # accounting over the recorded branch currents
    vsource_meta: dict[str, tuple[str, str]] = field(default_factory=dict)

    def voltage(self, node: str) -> np.ndarray:
        if node == GROUND:
            return np.zeros_like(self.times)
        return self.voltages[node]

    def at_end(self, node: str) -> float:
        return float(self.voltage(node)[-1])


class _Engine:
    """Compiled circuit: index maps, constant stamps, grouped element data."""

    def __init__(self, circuit: Circuit):
        circuit.elaborate()
        self.circuit = circuit
        self.options = circuit.options
        self.nodes = circuit.nodes
        self.node_index = {n: i for i, n in enumerate(self.nodes)}
        self.node_index[GROUND] = -1
        self.n_nodes = len(self.nodes)
        self.vsources = circuit.voltage_sources
        self.n_branch = len(self.vsources)
        self.dim = self.n_nodes + self.n_branch

        self.resistors = [e for e in circuit.elements if isinstance(e, Resistor)]
        self.capacitors = [e for e in circuit.elements if isinstance(e, Capacitor)]
        self.isources = [e for e in circuit.elements if isinstance(e, CurrentSource)]
        self.fets = [e for e in circuit.elements if isinstance(e, FinFET)]
        self.ptms = [e for e in circuit.elements if isinstance(e, PTM)]
        self.ptm_names = [p.name for p in self.ptms]
        self.n_caps = len(self.capacitors)
        self.n_fets = len(self.fets)

        idx = self.node_index
        g = np.zeros((self.dim, self.dim))
        for r in self.resistors:
            self._stamp_conductance(g, idx[r.n1], idx[r.n2], 1.0 / r.ohms)
        for j, vs in enumerate(self.vsources):
            row = self.n_nodes + j
            for node, sgn in ((vs.pos, 1.0), (vs.neg, -1.0)):
                i = idx[node]
                if i >= 0:
                    g[row, i] += sgn
                    g[i, row] += sgn
        for i in range(self.n_nodes):
            g[i, i] += self.options.gmin
        self.g_base = g

        self.cap_n = np.array([[idx[c.n1], idx[c.n2]] for c in self.capacitors],
                              dtype=int).reshape(-1, 2)
        self.cap_c = np.array([c.farads for c in self.capacitors])
        self.ptm_n = np.array([[idx[p.n1], idx[p.n2]] for p in self.ptms],
                              dtype=int).reshape(-1, 2)
        self.isrc_n = np.array([[idx[s.pos], idx[s.neg]] for s in self.isources],
                               dtype=int).reshape(-1, 2)

        self.fet_d = np.array([idx[f.drain] for f in self.fets], dtype=int)
        self.fet_g = np.array([idx[f.gate] for f in self.fets], dtype=int)
        self.fet_s = np.array([idx[f.source] for f in self.fets], dtype=int)
        self.fet_sign = np.array(
            [1.0 if f.params.polarity == "n" else -1.0 for f in self.fets])
        self.fet_a = np.array([f.params.n_fin * f.params.k for f in self.fets])
        self.fet_vth = np.array([f.params.v_th_eff for f in self.fets])
        self.fet_tau = np.array([f.params.n_ss * f.params.phi_t for f in self.fets])
        self.fet_phit = np.array([f.params.phi_t for f in self.fets])
        self.fet_alpha = np.array([f.params.alpha_sat for f in self.fets])
        self.fet_lam = np.array([f.params.lambda_clm for f in self.fets])

        bps: set[float] = set()
        for s in list(self.vsources) + list(self.isources):
            if isinstance(s.value, PWL):
                bps.update(s.value.breakpoints)
        self.breakpoints = sorted(bps)
        self._build_slope_table()

        self._xpad = np.zeros(self.n_nodes + 1)
        self._g_cache: tuple | None = None
        self._build_scatter_tables()

    def _build_slope_table(self):
        """Maximum source slew rate on each inter-breakpoint interval, used
        to clip the timestep across known ramps."""
        edges = self.breakpoints
        slopes = []
        profiles = [s.value for s in list(self.vsources) + list(self.isources)
                    if isinstance(s.value, PWL)]
        for i in range(len(edges) - 1):
            mid = 0.5 * (edges[i] + edges[i + 1])
            worst = 0.0
            for pwl in profiles:
                pts = pwl.points
                for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
                    if t0 <= mid <= t1:
                        worst = max(worst, abs((v1 - v0) / (t1 - t0)))
                        break
            slopes.append(worst)
        self.interval_slopes = slopes

    def max_slope_at(self, t: float) -> float:
        edges = self.breakpoints
        for i in range(len(edges) - 1):
            if edges[i] - _T_SNAP <= t < edges[i + 1] - _T_SNAP:
                return self.interval_slopes[i]
        return 0.0

    def _build_scatter_tables(self):
        """Precomputed flat-index tables so residual/Jacobian contributions
        scatter with a couple of np.add.at calls instead of Python loops."""
        dim = self.dim
        d_ok = self.fet_d >= 0
        s_ok = self.fet_s >= 0
        self.fet_f_rows = np.concatenate([self.fet_d[d_ok], self.fet_s[s_ok]])
        self.fet_f_pick = np.concatenate([np.nonzero(d_ok)[0],
                                          np.nonzero(s_ok)[0]])
        self.fet_f_sign = np.concatenate([np.ones(int(d_ok.sum())),
                                          -np.ones(int(s_ok.sum()))])
        slots = []
        n = self.n_fets
        for k in range(n):
            d, g_, s_ = int(self.fet_d[k]), int(self.fet_g[k]), int(self.fet_s[k])
            for row, sign in ((d, 1.0), (s_, -1.0)):
                if row < 0:
                    continue
                for col, block in ((d, 1), (g_, 0), (s_, 2)):
                    if col >= 0:
                        slots.append((row * dim + col, block * n + k, sign))
        self.fet_j_flat = np.array([s[0] for s in slots], dtype=int)
        self.fet_j_pick = np.array([s[1] for s in slots], dtype=int)
        self.fet_j_sign = np.array([s[2] for s in slots])

        a_ok = self.cap_n[:, 0] >= 0
        b_ok = self.cap_n[:, 1] >= 0
        self.cap_f_rows = np.concatenate([self.cap_n[a_ok, 0],
                                          self.cap_n[b_ok, 1]])
        self.cap_f_pick = np.concatenate([np.nonzero(a_ok)[0],
                                          np.nonzero(b_ok)[0]])
        self.cap_f_sign = np.concatenate([np.ones(int(a_ok.sum())),
                                          -np.ones(int(b_ok.sum()))])
        cslots = []
        for k in range(self.n_caps):
            a, b_ = int(self.cap_n[k, 0]), int(self.cap_n[k, 1])
            if a >= 0:
                cslots.append((a * dim + a, k, 1.0))
            if b_ >= 0:
                cslots.append((b_ * dim + b_, k, 1.0))
            if a >= 0 and b_ >= 0:
                cslots.append((a * dim + b_, k, -1.0))
                cslots.append((b_ * dim + a, k, -1.0))
        self.cap_j_flat = np.array([s[0] for s in cslots], dtype=int)
        self.cap_j_pick = np.array([s[1] for s in cslots], dtype=int)
        self.cap_j_sign = np.array([s[2] for s in cslots])

    @staticmethod
    def _stamp_conductance(g, i, j, val):
        if i >= 0:
            g[i, i] += val
        if j >= 0:
            g[j, j] += val
        if i >= 0 and j >= 0:
            g[i, j] -= val
            g[j, i] -= val

    # -- state-dependent linear part ------------------------------------

    def state_tuple(self, states: dict[str, PTMState]) -> tuple[PTMState, ...]:
        return tuple(states[name] for name in self.ptm_names)

    def g_with_states(self, states: dict[str, PTMState]):
        """(G, |G|) with PTM resistances stamped for the given states."""
        key = self.state_tuple(states)
        if self._g_cache is not None and self._g_cache[0] == key:
            return self._g_cache[1], self._g_cache[2]
        g = self.g_base.copy()
        for p in self.ptms:
            cond = 1.0 / ptm_resistance(p.params, states[p.name])
            self._stamp_conductance(g, self.node_index[p.n1],
                                    self.node_index[p.n2], cond)
        abs_g = np.abs(g)
        self._g_cache = (key, g, abs_g)
        return g, abs_g

    def source_terms(self, t: float, scale: float = 1.0):
        """(b, b_scale): constant residual part and its current-scale part."""
        b = np.zeros(self.dim)
        b_scale = np.zeros(self.dim)
        for j, vs in enumerate(self.vsources):
            b[self.n_nodes + j] = -scale * eval_profile(vs.value, t)
            b_scale[self.n_nodes + j] = abs(b[self.n_nodes + j])
        for s, (ip, ineg) in zip(self.isources, self.isrc_n):
            val = scale * eval_profile(s.value, t)
            if ip >= 0:
                b[ip] += val
                b_scale[ip] += abs(val)
            if ineg >= 0:
                b[ineg] -= val
                b_scale[ineg] += abs(val)
        return b, b_scale

    # -- nonlinear evaluation --------------------------------------------

    def fet_currents(self, x: np.ndarray) -> np.ndarray:
        """Vectorized FET drain currents only (residual evaluations)."""
        xp = self._xpad
        xp[:self.n_nodes] = x[:self.n_nodes]
        vd = xp[self.fet_d]
        vg = xp[self.fet_g]
        vs = xp[self.fet_s]
        sgn = self.fet_sign
        vgs = sgn * (vg - vs)
        vds = sgn * (vd - vs)
        xo = (vgs - self.fet_vth) / self.fet_tau
        v_ov = self.fet_tau * np.logaddexp(0.0, xo)
        c = np.maximum(v_ov, self.fet_phit)
        th = np.tanh(self.fet_alpha * vds / c)
        m = 1.0 + self.fet_lam * np.abs(vds)
        return sgn * (self.fet_a * m * (v_ov * v_ov) * th)

    def fet_eval(self, x: np.ndarray):
        """Vectorized FET currents/derivatives at node vector ``x``; returns
        ``(i, di_dvg, di_dvd, di_dvs)`` in actual orientation."""
        xp = self._xpad
        xp[:self.n_nodes] = x[:self.n_nodes]
        vd = xp[self.fet_d]
        vg = xp[self.fet_g]
        vs = xp[self.fet_s]
        sgn = self.fet_sign
        vgs = sgn * (vg - vs)
        vds = sgn * (vd - vs)

        xo = (vgs - self.fet_vth) / self.fet_tau
        v_ov = self.fet_tau * np.logaddexp(0.0, xo)
        ex = np.exp(-np.abs(xo))
        dvov = np.where(xo >= 0.0, 1.0, ex) / (1.0 + ex)
        c = np.maximum(v_ov, self.fet_phit)
        dc = dvov * (v_ov > self.fet_phit)
        u = self.fet_alpha * vds / c
        th = np.tanh(u)
        sech2 = 1.0 - th * th
        m = 1.0 + self.fet_lam * np.abs(vds)
        vov2 = v_ov * v_ov
        am = self.fet_a * m

        i_c = am * vov2 * th
        # th carries the sign of vds, so th*sign(vds) == |th|
        dig = am * (2.0 * v_ov * dvov * th - vov2 * sech2 * dc * u / c)
        did = self.fet_a * vov2 * (sech2 * (self.fet_alpha / c) * m
                                   + self.fet_lam * np.abs(th))
        i = sgn * i_c
        return i, dig, did, -(dig + did)

    # -- assembly ----------------------------------------------------------

    def assemble(self, x: np.ndarray, g_state: np.ndarray, abs_g: np.ndarray,
                 b: np.ndarray, b_scale: np.ndarray,
                 ctx: TransientContext | None, want_jacobian: bool,
                 want_scale: bool = True):
        """Residual, optional Jacobian, and per-row current scale at ``x``."""
        f = g_state @ x + b
        scale = (abs_g @ np.abs(x) + b_scale) if want_scale else None
        jac = g_state.copy() if want_jacobian else None

        if ctx is not None and self.n_caps:
            kap = 2.0 if ctx.method == "trapezoidal" else 1.0
            xp = self._xpad
            xp[:self.n_nodes] = x[:self.n_nodes]
            dv = xp[self.cap_n[:, 0]] - xp[self.cap_n[:, 1]]
            geq = (kap / ctx.dt) * self.cap_c
            i_cap = geq * (dv - ctx.cap_voltages)
            if kap == 2.0:
                i_cap = i_cap - ctx.cap_currents
            fv = i_cap[self.cap_f_pick] * self.cap_f_sign
            np.add.at(f, self.cap_f_rows, fv)
            if scale is not None:
                mag = np.abs(i_cap) + geq * np.abs(dv)
                np.add.at(scale, self.cap_f_rows, mag[self.cap_f_pick])
            if jac is not None and len(self.cap_j_flat):
                np.add.at(jac.ravel(), self.cap_j_flat,
                          geq[self.cap_j_pick] * self.cap_j_sign)

        if self.n_fets:
            if jac is None:
                i = self.fet_currents(x)
            else:
                i, dig, did, dis = self.fet_eval(x)
                derivs = np.concatenate([dig, did, dis])
                np.add.at(jac.ravel(), self.fet_j_flat,
                          derivs[self.fet_j_pick] * self.fet_j_sign)
            fv = i[self.fet_f_pick] * self.fet_f_sign
            np.add.at(f, self.fet_f_rows, fv)
            if scale is not None:
                np.add.at(scale, self.fet_f_rows, np.abs(fv))
        return f, jac, scale

    # -- Newton -----------------------------------------------------------

    def converged(self, f: np.ndarray, scale: np.ndarray,
                  strict: bool = False) -> bool:
        opt = self.options
        n = self.n_nodes
        af = np.abs(f)
        if strict:
            cur_tol = opt.abstol_current
        else:
            cur_tol = opt.abstol_current + opt.reltol * scale[:n]
        if (af[:n] > cur_tol).any():
            return False
        if self.n_branch:
            v_tol = opt.vntol + opt.reltol * scale[n:]
            return bool((af[n:] <= v_tol).all())
        return True

    def newton(self, x0: np.ndarray, t: float, states: dict[str, PTMState],
               ctx: TransientContext | None, source_scale: float = 1.0,
               strict: bool = False) -> np.ndarray:
        opt = self.options
        # transient steps have the dt-halving ladder behind them, so give up
        # early rather than grinding near a regenerative flip
        iters = opt.max_newton_iters if ctx is None \
            else min(opt.max_newton_iters, 25)
        g_state, abs_g = self.g_with_states(states)
        b, b_scale = self.source_terms(t, source_scale)
        x = x0.copy()
        f, _, scale = self.assemble(x, g_state, abs_g, b, b_scale, ctx,
                                    want_jacobian=False)
        if not np.isfinite(f).all():
            raise NewtonDivergence("non-finite residual at initial guess")
        best = np.inf
        stalled = 0
        for _ in range(iters):
            if self.converged(f, scale, strict=strict):
                return x
            fmax = float(np.abs(f).max())
            if fmax > 0.9 * best:
                stalled += 1
                if strict and stalled >= 3 and self.converged(f, scale):
                    return x  # floating-point floor for this system
                if stalled >= 8 and ctx is not None:
                    # the transient driver's dt ladder is cheaper than
                    # grinding near a regenerative flip
                    raise NewtonDivergence(
                        f"stalled at residual {fmax:.3e} at t={t}")
            else:
                stalled = 0
            best = min(best, fmax)

            _, jac, _ = self.assemble(x, g_state, abs_g, b, b_scale, ctx,
                                      want_jacobian=True, want_scale=False)
            try:
                dx = np.linalg.solve(jac, -f)
            except np.linalg.LinAlgError as exc:
                raise NewtonDivergence(f"singular Jacobian: {exc}") from exc
            if not np.isfinite(dx).all():
                raise NewtonDivergence("non-finite Newton update")
            vmax = float(np.abs(dx[:self.n_nodes]).max()) \
                if self.n_nodes else 0.0
            # voltage damping: never move a node more than 1 V per iteration,
            # but keep at least a 30% fraction so distant guesses converge in
            # logarithmically many steps
            limit = max(1.0, 0.3 * vmax)
            if vmax > limit:
                dx = dx * (limit / vmax)

            # backtracking line search on the residual max-norm
            alpha = 1.0
            while True:
                x_try = x + alpha * dx
                f_try, _, scale_try = self.assemble(
                    x_try, g_state, abs_g, b, b_scale, ctx,
                    want_jacobian=False)
                if np.isfinite(f_try).all():
                    if (float(np.abs(f_try).max()) < fmax
                            or self.converged(f_try, scale_try, strict=strict)
                            or alpha <= 1.0 / 128.0):
                        break
                elif alpha <= 1.0 / 128.0:
                    raise NewtonDivergence("non-finite residual")
                alpha *= 0.5
            x, f, scale = x_try, f_try, scale_try
        if self.converged(f, scale, strict=strict):
            return x
        raise NewtonDivergence(
            f"no convergence in {iters} iterations at t={t}")

    def newton_dc(self, x0: np.ndarray, t: float,
                  states: dict[str, PTMState]) -> np.ndarray:
        """DC Newton with a source-stepping fallback (all sources ramped to
        full value in at most 10 steps, each warm-starting the next)."""
        try:
            return self.newton(x0, t, states, None, strict=True)
        except NewtonDivergence:
            pass
        x = np.zeros(self.dim)
        for gamma in np.linspace(0.1, 1.0, 10):
            x = self.newton(x, t, states, None, source_scale=float(gamma),
                            strict=True)
        return x

    # -- discrete-state resolution ----------------------------------------

    def ptm_observables(self, x: np.ndarray, states: dict[str, PTMState]):
        xp = self._xpad
        xp[:self.n_nodes] = x[:self.n_nodes]
        out = {}
        for p, (ia, ib) in zip(self.ptms, self.ptm_n):
            v = xp[ia] - xp[ib]
            i = v / ptm_resistance(p.params, states[p.name])
            out[p.name] = (float(v), float(i))
        return out

    def next_states(self, x: np.ndarray, states: dict[str, PTMState]):
        obs = self.ptm_observables(x, states)
        return {p.name: ptm_next_state(p.params, states[p.name], *obs[p.name])
                for p in self.ptms}

    def solve_consistent(self, x0: np.ndarray, t: float,
                         states: dict[str, PTMState],
                         ctx: TransientContext | None,
                         dc_fallback: bool = False, strict: bool = False):
        """Newton solve followed by PTM state re-resolution to a fixed point.

        Returns ``(x, states, flips)``; ``flips`` lists state changes applied
        relative to the initial assignment.
        """
        states = dict(states)
        flips: list[tuple[str, PTMState, PTMState]] = []
        x = x0
        for _ in range(max(self.options.max_state_resolution_iters, 1)):
            if dc_fallback:
                x = self.newton_dc(x, t, states)
            else:
                x = self.newton(x, t, states, ctx, strict=strict)
            if not self.ptms:
                return x, states, flips
            nxt = self.next_states(x, states)
            if nxt == states:
                return x, states, flips
            for name in self.ptm_names:
                if nxt[name] is not states[name]:
                    flips.append((name, states[name], nxt[name]))
            states = nxt
        raise StateChatter(f"no consistent PTM state assignment at t={t}")


def compile_circuit(circuit: Circuit) -> _Engine:
    return _Engine(circuit)


# -- public operations ----------------------------------------------------


def assemble_system(circuit: Circuit, guess: SystemState,
                    ctx: TransientContext | None = None):
    """Jacobian matrix and residual vector of the circuit equations at
    ``guess``.  Without a transient context, sources are evaluated at
    ``guess.time`` and capacitors are open.  PTM elements are stamped as the
    linear resistance implied by their frozen states."""
    eng = _Engine(circuit)
    if not guess.matches(circuit):
        raise ValueError("state dimensions do not match the circuit")
    x = np.concatenate([guess.voltages, guess.branch_currents])
    g_state, abs_g = eng.g_with_states(guess.ptm_states)
    b, b_scale = eng.source_terms(guess.time)
    f, jac, _ = eng.assemble(x, g_state, abs_g, b, b_scale, ctx,
                             want_jacobian=True)
    return jac, f


def solve_dc(circuit: Circuit, initial: SystemState | None = None,
             time: float = 0.0) -> SystemState:
    """DC operating point: KCL within tolerance and every PTM discrete state
    a fixed point of its transition rule.  Sources evaluate at ``time``."""
    eng = _Engine(circuit)
    return _solve_dc_engine(eng, initial, time)[0]


def _solve_dc_engine(eng: _Engine, initial: SystemState | None,
                     time: float = 0.0):
    circuit = eng.circuit
    if initial is None:
        initial = SystemState.zeros(circuit, time)
    if not initial.matches(circuit):
        raise ValueError("initial state dimensions do not match the circuit")
    x0 = np.concatenate([initial.voltages, initial.branch_currents])
    try:
        x, states, flips = eng.solve_consistent(
            x0, time, initial.ptm_states, None, dc_fallback=True, strict=True)
    except StateChatter as exc:
        raise NoConsistentState(str(exc)) from exc
    state = SystemState(x[:eng.n_nodes].copy(), x[eng.n_nodes:].copy(),
                        states, time)
    return state, flips


def resolve_device_states(circuit: Circuit, converged: SystemState) -> SystemState:
    """Re-evaluate every PTM transition rule at a converged solution; if any
    state changes, re-solve with updated stamps until the assignment is a
    fixed point (sticky hysteresis: a state only moves when its own condition
    fires)."""
    eng = _Engine(circuit)
    x0 = np.concatenate([converged.voltages, converged.branch_currents])
    try:
        x, states, _ = eng.solve_consistent(
            x0, converged.time, converged.ptm_states, None,
            dc_fallback=True, strict=True)
    except StateChatter as exc:
        raise NoConsistentState(str(exc)) from exc
    return SystemState(x[:eng.n_nodes].copy(), x[eng.n_nodes:].copy(),
                       states, converged.time)


def _cap_branch_voltages(eng: _Engine, x: np.ndarray) -> np.ndarray:
    if not eng.n_caps:
        return np.empty(0)
    xp = np.append(x[:eng.n_nodes], 0.0)
    return xp[eng.cap_n[:, 0]] - xp[eng.cap_n[:, 1]]


def _initial_cap_currents(eng: _Engine, x: np.ndarray, t: float,
                          states: dict[str, PTMState]) -> np.ndarray:
    """Capacitor currents consistent with KCL at a converged point: the
    static residual is absorbed by the capacitor incidence (least squares;
    exact whenever each capacitor owns its node)."""
    if not eng.n_caps:
        return np.empty(0)
    g_state, abs_g = eng.g_with_states(states)
    b, b_scale = eng.source_terms(t)
    f, _, _ = eng.assemble(x, g_state, abs_g, b, b_scale, None,
                           want_jacobian=False)
    inc = np.zeros((eng.n_nodes, eng.n_caps))
    for k, (ia, ib) in enumerate(eng.cap_n):
        if ia >= 0:
            inc[ia, k] = 1.0
        if ib >= 0:
            inc[ib, k] = -1.0
    sol, *_ = np.linalg.lstsq(inc, -f[:eng.n_nodes], rcond=None)
    return sol


def step_transient(circuit: Circuit, state: SystemState, dt: float,
                   cap_currents: np.ndarray | None = None) -> SystemState:
    """One implicit step of size ``dt`` from a converged ``state``.

    Companion models follow ``circuit.options.integration_method``.  PTM
    states are resolved at the new time; failure raises ``StepFailure`` (the
    transient driver retries with dt/2 before giving up at ``dt_min``)."""
    opt = circuit.options
    if dt < opt.dt_min:
        raise StepFailure(f"dt={dt} below dt_min", time=state.time)
    eng = _Engine(circuit)
    x0 = np.concatenate([state.voltages, state.branch_currents])
    cap_v = _cap_branch_voltages(eng, x0)
    if cap_currents is None:
        cap_currents = _initial_cap_currents(eng, x0, state.time,
                                             state.ptm_states)
    ctx = TransientContext(dt, cap_v, cap_currents, opt.integration_method)
    t_new = state.time + dt
    try:
        x, states, _ = eng.solve_consistent(x0, t_new, state.ptm_states, ctx)
    except (NewtonDivergence, StateChatter) as exc:
        raise StepFailure(str(exc), time=state.time) from exc
    return SystemState(x[:eng.n_nodes].copy(), x[eng.n_nodes:].copy(),
                       states, t_new)


class _Recorder:
    def __init__(self, eng: _Engine):
        self.eng = eng
        self.times: list[float] = []
        self.dts: list[float] = []
        self.volt_rows: list[np.ndarray] = []
        self.branch_rows: list[np.ndarray] = []
        self.isrc_rows: list[list[float]] = []
        self.ptm_i_rows: list[list[float]] = []
        self.state_rows: list[tuple[str, ...]] = []

    def record(self, t: float, x: np.ndarray, states: dict[str, PTMState],
               dt: float):
        eng = self.eng
        self.times.append(t)
        self.dts.append(dt)
        self.volt_rows.append(x[:eng.n_nodes].copy())
        self.branch_rows.append(x[eng.n_nodes:].copy())
        self.isrc_rows.append([eval_profile(s.value, t) for s in eng.isources])
        obs = eng.ptm_observables(x, states)
        self.ptm_i_rows.append([obs[name][1] for name in eng.ptm_names])
        self.state_rows.append(tuple(states[n].value for n in eng.ptm_names))

    def build(self, events: list[StateEvent],
              final_state: SystemState) -> TransientResult:
        eng = self.eng
        times = np.array(self.times)
        volts = np.array(self.volt_rows).reshape(len(times), eng.n_nodes)
        branch = np.array(self.branch_rows).reshape(len(times), eng.n_branch)
        voltages = {n: volts[:, i] for i, n in enumerate(eng.nodes)}
        currents: dict[str, np.ndarray] = {}
        for j, vs in enumerate(eng.vsources):
            currents[vs.name] = branch[:, j]
        if eng.isources:
            isrc = np.array(self.isrc_rows)
            for j, s in enumerate(eng.isources):
                currents[s.name] = isrc[:, j]
        if eng.ptms:
            ptm_i = np.array(self.ptm_i_rows)
            for j, p in enumerate(eng.ptms):
                currents[p.name] = ptm_i[:, j]
        state_arr = {name: np.array([row[j] for row in self.state_rows])
                     for j, name in enumerate(eng.ptm_names)}
        meta = {vs.name: (vs.pos, vs.neg) for vs in eng.vsources}
        return TransientResult(times, voltages, currents, state_arr, events,
                               final_state, np.array(self.dts), meta)


def run_transient(circuit: Circuit, schedule=None, t_end: float = 0.0,
                  initial: SystemState | None = None) -> TransientResult:
    """Adaptive transient run starting from the DC operating point at t=0.

    The step grows geometrically up to ``dt_max`` in smooth regions, clips to
    every source breakpoint, and shrinks toward ``dt_min`` to localize each
    PTM transition; after a transition or a breakpoint the growth restarts
    from ``dt_initial``.  DC-resolution flips are logged as t=0 events.
    ``initial`` seeds the DC solve (PTM states and voltage guess).
    """
    if t_end <= 0:
        raise ValueError("t_end must be > 0")
    if schedule is not None:
        from .topologies import apply_schedule, initial_guess
        apply_schedule(circuit, schedule)
        if initial is None and schedule.dc_guess:
            initial = initial_guess(circuit, schedule)

    opt = circuit.options
    eng = _Engine(circuit)
    dc_state, dc_flips = _solve_dc_engine(eng, initial, 0.0)
    events = [StateEvent(0.0, name, before, after)
              for name, before, after in dc_flips]

    x = np.concatenate([dc_state.voltages, dc_state.branch_currents])
    states = dict(dc_state.ptm_states)
    cap_v = _cap_branch_voltages(eng, x)
    cap_i = np.zeros(eng.n_caps)
    kap = 2.0 if opt.integration_method == "trapezoidal" else 1.0

    rec = _Recorder(eng)
    rec.record(0.0, x, states, 0.0)

    bps = [b for b in eng.breakpoints if _T_SNAP < b < t_end - _T_SNAP]
    bps.append(t_end)
    t = 0.0
    dt = opt.dt_initial
    streak = 0
    x_prev = None
    dt_prev = 0.0
    while t < t_end - _T_SNAP:
        next_bp = next(b for b in bps if b > t + _T_SNAP)
        dt_try = min(dt, opt.dt_max, next_bp - t)
        slope = eng.max_slope_at(t)
        if slope > 0.0:
            # known source ramp: keep each step's drive change bounded
            dt_try = min(dt_try, max(DV_MAX_STEP / slope, opt.dt_min))
        rejected = False
        while True:
            ctx = TransientContext(dt_try, cap_v, cap_i,
                                   opt.integration_method)
            t_new = t + dt_try
            if x_prev is not None and dt_prev > 0.0:
                # linear extrapolation warm start
                guess = x + (x - x_prev) * (dt_try / dt_prev)
            else:
                guess = x
            try:
                x_new, new_states, flips = eng.solve_consistent(
                    guess, t_new, states, ctx)
            except (NewtonDivergence, StateChatter) as exc:
                if dt_try <= opt.dt_min * 1.0001:
                    raise StepFailure(str(exc), time=t) from exc
                dt_try = max(dt_try / 2.0, opt.dt_min)
                rejected = True
                continue
            if dt_try > opt.dt_min * 1.0001:
                if flips:
                    # localize the transition to within dt_min of its crossing
                    dt_try = max(dt_try / 2.0, opt.dt_min)
                    rejected = True
                    continue
                dv = float(np.max(np.abs(x_new[:eng.n_nodes]
                                         - x[:eng.n_nodes]), initial=0.0))
                if dv > DV_MAX_STEP:
                    dt_try = max(dt_try / 2.0, opt.dt_min)
                    rejected = True
                    continue
            break

        new_cap_v = _cap_branch_voltages(eng, x_new)
        if eng.n_caps:
            cap_i = (kap / dt_try) * eng.cap_c * (new_cap_v - cap_v) \
                - (cap_i if kap == 2.0 else 0.0)
        cap_v = new_cap_v
        for name, before, after in flips:
            events.append(StateEvent(t_new, name, before, after))
        x_prev, dt_prev = x, dt_try
        x = x_new
        states = new_states
        t = t_new
        if next_bp - t <= _T_SNAP:
            t = next_bp
        rec.record(t, x, states, dt_try)

        if flips:
            dt = opt.dt_initial
            streak = 0
            x_prev = None
        elif rejected:
            dt = dt_try  # hold the step that finally worked
            streak = 0
        else:
            streak += 1
            dt = min(dt_try * (4.0 if streak >= 2 else 2.0), opt.dt_max)

    final = SystemState(x[:eng.n_nodes].copy(), x[eng.n_nodes:].copy(),
                        dict(states), t)
    return rec.build(events, final)


def run_transient_fixed(circuit: Circuit, dt: float, t_end: float,
                        initial: SystemState | None = None,
                        initial_is_exact: bool = False) -> TransientResult:
    """Fixed-step transient (no adaptivity, no breakpoint clipping); used by
    accuracy and integration-order checks.  With ``initial_is_exact`` the
    given state is taken as the converged t=0 condition instead of solving
    for the operating point."""
    eng = _Engine(circuit)
    opt = circuit.options
    if initial_is_exact:
        if initial is None or not initial.matches(circuit):
            raise ValueError("exact initial state required")
        dc_state, dc_flips = initial, []
    else:
        dc_state, dc_flips = _solve_dc_engine(eng, initial, 0.0)
    events = [StateEvent(0.0, n, b, a) for n, b, a in dc_flips]
    x = np.concatenate([dc_state.voltages, dc_state.branch_currents])
    states = dict(dc_state.ptm_states)
    cap_v = _cap_branch_voltages(eng, x)
    cap_i = _initial_cap_currents(eng, x, 0.0, states)
    kap = 2.0 if opt.integration_method == "trapezoidal" else 1.0

    rec = _Recorder(eng)
    rec.record(0.0, x, states, 0.0)
    n_steps = int(round(t_end / dt))
    for k in range(1, n_steps + 1):
        t_new = k * dt
        ctx = TransientContext(dt, cap_v, cap_i, opt.integration_method)
        x, states, flips = eng.solve_consistent(x, t_new, states, ctx)
        new_cap_v = _cap_branch_voltages(eng, x)
        cap_i = (kap / dt) * eng.cap_c * (new_cap_v - cap_v) \
            - (cap_i if kap == 2.0 else 0.0)
        cap_v = new_cap_v
        for name, before, after in flips:
            events.append(StateEvent(t_new, name, before, after))
        rec.record(t_new, x, states, dt)
    final = SystemState(x[:eng.n_nodes].copy(), x[eng.n_nodes:].copy(),
                        dict(states), n_steps * dt)
    return rec.build(events, final)


def dc_element_powers(circuit: Circuit, state: SystemState) -> dict[str, float]:
    """Per-element absorbed power at a DC solution (passive sign convention:
    sources delivering power report negative values).  The solver's gmin
    regularization appears as the pseudo-element ``_gmin`` so the total
    balances to zero."""
    eng = _Engine(circuit)
    xp = np.append(state.voltages, 0.0)

    def v(node):
        return float(xp[eng.node_index[node]]) if node != GROUND else 0.0

    powers: dict[str, float] = {}
    for r in eng.resistors:
        dv = v(r.n1) - v(r.n2)
        powers[r.name] = dv * dv / r.ohms
    for c in eng.capacitors:
        powers[c.name] = 0.0
    for p in eng.ptms:
        dv = v(p.n1) - v(p.n2)
        powers[p.name] = dv * dv / ptm_resistance(p.params,
                                                  state.ptm_states[p.name])
    for j, vs in enumerate(eng.vsources):
        powers[vs.name] = (v(vs.pos) - v(vs.neg)) * float(state.branch_currents[j])
    for s in eng.isources:
        powers[s.name] = (v(s.pos) - v(s.neg)) * eval_profile(s.value, state.time)
    if eng.fets:
        x = np.concatenate([state.voltages, state.branch_currents])
        i, *_ = eng.fet_eval(x)
        for k, f in enumerate(eng.fets):
            powers[f.name] = (v(f.drain) - v(f.source)) * float(i[k])
    powers["_gmin"] = float(eng.options.gmin * np.sum(state.voltages ** 2))
    return powers
