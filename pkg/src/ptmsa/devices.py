"""Compact device models: FinFET, two-state hysteretic PTM, and the composite
Hyper-FET branch (FET with a PTM in series at its source).

The FinFET model is a smooth single-expression compact model: a softplus
overdrive gives a continuous subthreshold-to-strong-inversion transition, a
tanh drain saturation term keeps the current odd in V_DS, and a linear
output-conductance factor models the non-ideal saturation-current increase
with drain bias.  All derivatives are returned analytically.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import BracketFailure

# Thermal voltage at 300 K.
PHI_T_300K = 0.02585


@dataclass(frozen=True)
class FinFETParams:
    """Parameters of the smooth FinFET compact model (per-fin k scaling)."""

    polarity: str = "n"              # "n" or "p"
    v_th: float = 0.2                # nominal threshold magnitude, volts
    delta_v_th: float = 0.0          # threshold shift for window/variation studies
    n_fin: int = 1
    k: float = 111e-6                # amperes/volt^2 per fin
    n_ss: float = 1.2                # subthreshold slope factor
    phi_t: float = PHI_T_300K        # thermal voltage, volts
    alpha_sat: float = 2.0           # drain-saturation shape
    lambda_clm: float = 0.1          # output conductance, 1/volts

    def __post_init__(self):
        if self.polarity not in ("n", "p"):
            raise ValueError(f"polarity must be 'n' or 'p', not {self.polarity!r}")
        if self.n_fin < 1:
            raise ValueError("n_fin must be >= 1")
        if self.k <= 0:
            raise ValueError("k must be > 0")
        if self.n_ss < 1:
            raise ValueError("n_ss must be >= 1")
        if self.lambda_clm < 0:
            raise ValueError("lambda_clm must be >= 0")

    @property
    def v_th_eff(self) -> float:
        return self.v_th + self.delta_v_th

    def with_(self, **changes) -> "FinFETParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class PTMParams:
    """Geometry and transition thresholds of a bulk phase-transition material.

    Resistances derive from resistivities: R = rho * L / area.  The
    metal-to-insulator trigger is current-based; the equivalent voltage
    V_C_MIT = I_C_MIT * R_MET is derived, not independent.
    """

    rho_ins: float = 0.033           # ohm*m, insulating state
    rho_met: float = 6.6e-4          # ohm*m, metallic state
    l_ptm: float = 100e-9            # meters
    area: float = 1e-14              # meters^2
    v_c_imt: float = 0.336           # volts, insulator-to-metal threshold
    i_c_mit: float = 5e-6            # amperes, metal-to-insulator threshold

    def __post_init__(self):
        if not (self.rho_ins > self.rho_met > 0):
            raise ValueError("require rho_ins > rho_met > 0")
        if self.l_ptm <= 0 or self.area <= 0:
            raise ValueError("l_ptm and area must be > 0")
        if self.v_c_mit >= self.v_c_imt:
            raise ValueError("hysteresis requires V_C_MIT < V_C_IMT")

    @property
    def r_ins(self) -> float:
        return self.rho_ins * self.l_ptm / self.area

    @property
    def r_met(self) -> float:
        return self.rho_met * self.l_ptm / self.area

    @property
    def v_c_mit(self) -> float:
        return self.i_c_mit * self.rho_met * self.l_ptm / self.area

    def with_(self, **changes) -> "PTMParams":
        return replace(self, **changes)

    def with_rho_ins_factor(self, factor: float) -> "PTMParams":
        """Scale the insulating resistivity only (metallic stays nominal).

        The transition fires at a fixed critical current density, so the
        threshold voltage of a higher-resistivity insulating state scales
        proportionally: V_C_IMT tracks rho_ins."""
        return replace(self, rho_ins=self.rho_ins * factor,
                       v_c_imt=self.v_c_imt * factor)

    def with_length_factor(self, factor: float) -> "PTMParams":
        """Scale the PTM length; moves R_INS and R_MET together."""
        return replace(self, l_ptm=self.l_ptm * factor)


class PTMState(enum.Enum):
    INSULATING = "ins"
    METALLIC = "met"


def ptm_resistance(params: PTMParams, state: PTMState) -> float:
    """Branch resistance of the PTM frozen in the given discrete state."""
    return params.r_ins if state is PTMState.INSULATING else params.r_met


def ptm_next_state(params: PTMParams, state: PTMState,
                   v_ptm: float, i_ptm: float) -> PTMState:
    """Sticky hysteretic transition rule, evaluated at a converged solution.

    Insulating flips to metallic only when |V| reaches V_C_IMT; metallic
    flips back only when |I| falls to I_C_MIT.  Otherwise the state holds.
    """
    if state is PTMState.INSULATING:
        if abs(v_ptm) >= params.v_c_imt:
            return PTMState.METALLIC
        return PTMState.INSULATING
    if abs(i_ptm) <= params.i_c_mit:
        return PTMState.INSULATING
    return PTMState.METALLIC


def _canonical_current(p: FinFETParams, vgs, vds):
    """Model evaluation in the canonical (n-type) orientation.

    Returns (i, di_dvgs, di_dvds) as numpy arrays; inputs broadcast.
    """
    vgs = np.asarray(vgs, dtype=float)
    vds = np.asarray(vds, dtype=float)
    tau = p.n_ss * p.phi_t
    x = (vgs - p.v_th_eff) / tau
    v_ov = tau * np.logaddexp(0.0, x)
    ex = np.exp(-np.abs(x))
    dvov = np.where(x >= 0.0, 1.0 / (1.0 + ex), ex / (1.0 + ex))

    c = np.maximum(v_ov, p.phi_t)
    dc = np.where(v_ov > p.phi_t, dvov, 0.0)

    u = p.alpha_sat * vds / c
    t = np.tanh(u)
    sech2 = 1.0 - t * t
    m = 1.0 + p.lambda_clm * np.abs(vds)

    a = p.n_fin * p.k
    i = a * v_ov * v_ov * t * m
    di_dvgs = a * m * (2.0 * v_ov * dvov * t
                       + v_ov * v_ov * sech2 * (-p.alpha_sat * vds / (c * c)) * dc)
    di_dvds = a * v_ov * v_ov * (sech2 * (p.alpha_sat / c) * m
                                 + t * p.lambda_clm * np.sign(vds))
    return i, di_dvgs, di_dvds


def finfet_current(params: FinFETParams, v_gs: float, v_ds: float):
    """Drain current and partial derivatives at the given terminal bias.

    Sign convention: ``i_d`` is the current entering the drain terminal and
    leaving the source terminal.  A p-type device mirrors both voltages
    internally, so a conducting PMOS (negative V_GS, V_DS) returns a negative
    drain current.

    Returns ``(i_d, di_dvgs, di_dvds)``.
    """
    if params.polarity == "n":
        i, dg, dd = _canonical_current(params, v_gs, v_ds)
        return float(i), float(dg), float(dd)
    i, dg, dd = _canonical_current(params, -v_gs, -v_ds)
    return -float(i), float(dg), float(dd)


def hyperfet_branch_solve(fet: FinFETParams, ptm: PTMParams, state: PTMState,
                          v_g: float, v_d: float, v_sext: float,
                          abstol_current: float = 1e-12,
                          max_iters: int = 200):
    """Solve the series FET + PTM branch for the internal source node.

    The PTM sits between the external source terminal ``v_sext`` and the
    FET source.  With the PTM frozen, KCL at the internal node reads

        I_fet(v_g - v_int, v_d - v_int) = (v_int - v_sext) / R(state)

    which is strictly monotone in ``v_int``; a safeguarded Newton/bisection
    drives the residual below ``abstol_current``.

    Returns ``(i_branch, v_internal)`` where ``i_branch`` flows from drain to
    source through the FET and on through the PTM.
    """
    r = ptm_resistance(ptm, state)
    g_ptm = 1.0 / r

    def residual(v):
        i, dg, dd = finfet_current(fet, v_g - v, v_d - v)
        f = i - (v - v_sext) * g_ptm
        df = -(dg + dd) - g_ptm
        return f, df, i

    lo = min(v_d, v_g, v_sext) - 1.0
    hi = max(v_d, v_g, v_sext) + 1.0
    f_lo, _, _ = residual(lo)
    f_hi, _, _ = residual(hi)
    if not (f_lo >= 0.0 >= f_hi):
        raise BracketFailure(
            f"branch residual not bracketed on [{lo}, {hi}]: f={f_lo!r}, {f_hi!r}")

    v = 0.5 * (lo + hi)
    for _ in range(max_iters):
        f, df, i = residual(v)
        if abs(f) <= abstol_current:
            return i, v
        if f > 0.0:
            lo = v
        else:
            hi = v
        v_newton = v - f / df if df != 0.0 else None
        if v_newton is not None and lo < v_newton < hi:
            v = v_newton
        else:
            v = 0.5 * (lo + hi)
    f, _, i = residual(v)
    if abs(f) <= abstol_current * 100:
        return i, v
    raise BracketFailure(f"branch solve stalled at residual {f!r}")


def hyperfet_selectivity(fet: FinFETParams, ptm: PTMParams, v_dd: float) -> float:
    """On/off current ratio: metallic branch at full gate drive over the
    insulating branch at zero gate drive (n-type orientation)."""
    i_on, _ = hyperfet_branch_solve(fet, ptm, PTMState.METALLIC, v_dd, v_dd, 0.0)
    i_off, _ = hyperfet_branch_solve(fet, ptm, PTMState.INSULATING, 0.0, v_dd, 0.0)
    return abs(i_on) / max(abs(i_off), 1e-30)
