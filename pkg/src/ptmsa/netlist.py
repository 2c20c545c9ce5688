"""SPICE-like netlist front-end.

Grammar (one element per line, case-insensitive, ``*`` comment lines,
engineering suffixes f p n u m k meg g on any number):

    R<name> n1 n2 <ohms>
    C<name> n1 n2 <farads>
    V<name> n+ n- DC <volts> | PWL(t1 v1 t2 v2 ...)
    I<name> n+ n- DC <amps>  | PWL(t1 v1 t2 v2 ...)
    M<name> d g s TYPE=<n|p> VTH=<v> NFIN=<int> [K= NSS= ALPHA= LAMBDA= DVTH= PHIT=]
    P<name> n1 n2 RHOINS= RHOMET= L= AREA= VIMT= IMIT= [STATE=ins|met]
    .options [vdd= abstol= reltol= vntol= dt_initial= dt_min= dt_max=
              method=<be|trap> max_newton_iters= max_state_resolution_iters=]
    .end

``print_netlist`` emits a canonical form (elements sorted by name, plain
full-precision numbers) that re-parses to a structurally equal circuit.
"""

from __future__ import annotations

import re

from .circuit import (Capacitor, Circuit, CurrentSource, FinFET, PTM, PWL,
                      Resistor, SolverOptions, VoltageSource)
from .devices import FinFETParams, PTMParams, PTMState
from .errors import ParseError

_NUMBER_RE = re.compile(
    r"([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(meg|[fpnumkg])?$",
    re.IGNORECASE)
_SUFFIX = {"f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "m": 1e-3,
           "k": 1e3, "meg": 1e6, "g": 1e9}
_NODE_RE = re.compile(r"[a-z0-9_]+$")

_OPTION_KEYS = ("vdd", "abstol", "reltol", "vntol", "dt_initial", "dt_min",
                "dt_max", "method", "max_newton_iters",
                "max_state_resolution_iters")
_METHODS = {"be": "backward-euler", "trap": "trapezoidal",
            "backward-euler": "backward-euler", "trapezoidal": "trapezoidal"}


def parse_number(text: str) -> float | None:
    """Parse a number with an optional engineering suffix; None on failure."""
    m = _NUMBER_RE.match(text)
    if not m:
        return None
    value = float(m.group(1))
    if m.group(2):
        value *= _SUFFIX[m.group(2).lower()]
    return value


class _Token:
    __slots__ = ("text", "line", "col")

    def __init__(self, text: str, line: int, col: int):
        self.text = text
        self.line = line
        self.col = col


def _tokenize_line(raw: str, lineno: int) -> list[_Token]:
    tokens = []
    i = 0
    n = len(raw)
    while i < n:
        ch = raw[i]
        if ch in " \t\r":
            i += 1
            continue
        if ch in "()":
            tokens.append(_Token(ch, lineno, i + 1))
            i += 1
            continue
        j = i
        while j < n and raw[j] not in " \t\r()":
            j += 1
        tokens.append(_Token(raw[i:j].lower(), lineno, i + 1))
        i = j
    return tokens


class _LineParser:
    def __init__(self, tokens: list[_Token], lineno: int):
        self.tokens = tokens
        self.pos = 0
        self.lineno = lineno

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expected: tuple[str, ...]) -> _Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1]
            raise ParseError("unexpected end of line", self.lineno,
                             last.col + len(last.text), "", expected)
        self.pos += 1
        return tok

    def number(self, what: str) -> float:
        tok = self.take((what,))
        value = parse_number(tok.text)
        if value is None:
            raise ParseError(f"invalid number for {what}", self.lineno,
                             tok.col, tok.text, (what,))
        return value

    def node(self, what: str) -> str:
        tok = self.take((what,))
        if not _NODE_RE.match(tok.text):
            raise ParseError(f"invalid node name for {what}", self.lineno,
                             tok.col, tok.text, (what,))
        return tok.text

    def literal(self, *alternatives: str) -> str:
        tok = self.take(alternatives)
        if tok.text not in alternatives:
            raise ParseError("unexpected token", self.lineno, tok.col,
                             tok.text, alternatives)
        return tok.text

    def keyword_value(self, allowed: tuple[str, ...]) -> tuple[str, str, _Token]:
        tok = self.take(tuple(f"{k}=<value>" for k in allowed))
        if "=" not in tok.text:
            raise ParseError("expected key=value", self.lineno, tok.col,
                             tok.text, tuple(f"{k}=<value>" for k in allowed))
        key, _, val = tok.text.partition("=")
        if key not in allowed:
            raise ParseError(f"unknown parameter {key!r}", self.lineno,
                             tok.col, tok.text,
                             tuple(f"{k}=<value>" for k in allowed))
        if not val:
            raise ParseError(f"missing value for {key}", self.lineno, tok.col,
                             tok.text, (f"{key}=<value>",))
        return key, val, tok

    def end_of_line(self):
        tok = self.peek()
        if tok is not None:
            raise ParseError("unexpected trailing token", self.lineno,
                             tok.col, tok.text, ("end of line",))

    def profile(self) -> object:
        """DC <value> or PWL(t v ...)."""
        tok = self.take(("DC", "PWL("))
        if tok.text == "dc":
            return self.number("value")
        if tok.text != "pwl":
            raise ParseError("expected source profile", self.lineno, tok.col,
                             tok.text, ("DC", "PWL("))
        self.literal("(")
        values: list[float] = []
        while True:
            nxt = self.peek()
            if nxt is None:
                raise ParseError("unterminated PWL", self.lineno,
                                 self.tokens[-1].col + len(self.tokens[-1].text),
                                 "", (")",))
            if nxt.text == ")":
                self.pos += 1
                break
            values.append(self.number("PWL value"))
        if len(values) < 2 or len(values) % 2:
            raise ParseError("PWL needs time/value pairs", self.lineno,
                             tok.col, tok.text, ("t1 v1 t2 v2 ...",))
        pairs = tuple(zip(values[::2], values[1::2]))
        try:
            return PWL(pairs)
        except ValueError as exc:
            raise ParseError(str(exc), self.lineno, tok.col, tok.text,
                             ("strictly increasing times",)) from None


def _required(params: dict[str, float], keys: tuple[str, ...],
              lp: _LineParser, card: _Token):
    missing = [k for k in keys if k not in params]
    if missing:
        raise ParseError(f"missing parameters {missing}", lp.lineno, card.col,
                         card.text, tuple(f"{k}=<value>" for k in missing))


def parse_netlist(text: str) -> Circuit:
    """Parse netlist text into an elaborated circuit."""
    circuit = Circuit("netlist")
    options: dict[str, object] = {}
    ended = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = _tokenize_line(raw, lineno)
        if not tokens or raw.lstrip().startswith("*"):
            continue
        if ended:
            tok = tokens[0]
            raise ParseError("content after .end", lineno, tok.col, tok.text,
                             ("end of file",))
        lp = _LineParser(tokens, lineno)
        head = lp.take(("element card", ".options", ".end"))
        kind = head.text[0]

        if head.text == ".end":
            lp.end_of_line()
            ended = True
            continue
        if head.text == ".options":
            while lp.peek() is not None:
                key, val, tok = lp.keyword_value(_OPTION_KEYS)
                if key == "method":
                    if val not in _METHODS:
                        raise ParseError("unknown method", lineno, tok.col,
                                         tok.text, ("be", "trap"))
                    options[key] = _METHODS[val]
                elif key in ("max_newton_iters", "max_state_resolution_iters"):
                    num = parse_number(val)
                    if num is None or num != int(num) or num < 1:
                        raise ParseError(f"invalid integer for {key}", lineno,
                                         tok.col, tok.text, (f"{key}=<int>",))
                    options[key] = int(num)
                else:
                    num = parse_number(val)
                    if num is None:
                        raise ParseError(f"invalid number for {key}", lineno,
                                         tok.col, tok.text, (f"{key}=<value>",))
                    options[key] = num
            continue
        if head.text.startswith("."):
            raise ParseError("unknown directive", lineno, head.col, head.text,
                             (".options", ".end"))

        if kind == "r":
            n1, n2 = lp.node("n1"), lp.node("n2")
            value = lp.number("resistance")
            lp.end_of_line()
            circuit.add(Resistor(head.text, n1, n2, value))
        elif kind == "c":
            n1, n2 = lp.node("n1"), lp.node("n2")
            value = lp.number("capacitance")
            lp.end_of_line()
            circuit.add(Capacitor(head.text, n1, n2, value))
        elif kind == "v":
            pos, neg = lp.node("n+"), lp.node("n-")
            profile = lp.profile()
            lp.end_of_line()
            circuit.add(VoltageSource(head.text, pos, neg, profile))
        elif kind == "i":
            pos, neg = lp.node("n+"), lp.node("n-")
            profile = lp.profile()
            lp.end_of_line()
            circuit.add(CurrentSource(head.text, pos, neg, profile))
        elif kind == "m":
            d, g, s = lp.node("drain"), lp.node("gate"), lp.node("source")
            allowed = ("type", "vth", "nfin", "k", "nss", "alpha", "lambda",
                       "dvth", "phit")
            params: dict[str, object] = {}
            while lp.peek() is not None:
                key, val, tok = lp.keyword_value(allowed)
                if key == "type":
                    if val not in ("n", "p"):
                        raise ParseError("type must be n or p", lineno,
                                         tok.col, tok.text, ("type=n", "type=p"))
                    params[key] = val
                else:
                    num = parse_number(val)
                    if num is None:
                        raise ParseError(f"invalid number for {key}", lineno,
                                         tok.col, tok.text, (f"{key}=<value>",))
                    params[key] = num
            _required(params, ("type", "vth", "nfin"), lp, head)
            if params["nfin"] != int(params["nfin"]) or params["nfin"] < 1:
                raise ParseError("nfin must be a positive integer", lineno,
                                 head.col, head.text, ("nfin=<int>",))
            defaults = FinFETParams()
            fp = FinFETParams(
                polarity=params["type"],
                v_th=params["vth"],
                n_fin=int(params["nfin"]),
                k=params.get("k", defaults.k),
                n_ss=params.get("nss", defaults.n_ss),
                alpha_sat=params.get("alpha", defaults.alpha_sat),
                lambda_clm=params.get("lambda", defaults.lambda_clm),
                delta_v_th=params.get("dvth", 0.0),
                phi_t=params.get("phit", defaults.phi_t),
            )
            lp.end_of_line()
            circuit.add(FinFET(head.text, d, g, s, fp))
        elif kind == "p":
            n1, n2 = lp.node("n1"), lp.node("n2")
            allowed = ("rhoins", "rhomet", "l", "area", "vimt", "imit", "state")
            params = {}
            while lp.peek() is not None:
                key, val, tok = lp.keyword_value(allowed)
                if key == "state":
                    if val not in ("ins", "met"):
                        raise ParseError("state must be ins or met", lineno,
                                         tok.col, tok.text,
                                         ("state=ins", "state=met"))
                    params[key] = val
                else:
                    num = parse_number(val)
                    if num is None:
                        raise ParseError(f"invalid number for {key}", lineno,
                                         tok.col, tok.text, (f"{key}=<value>",))
                    params[key] = num
            _required(params, ("rhoins", "rhomet", "l", "area", "vimt",
                               "imit"), lp, head)
            pp = PTMParams(rho_ins=params["rhoins"], rho_met=params["rhomet"],
                           l_ptm=params["l"], area=params["area"],
                           v_c_imt=params["vimt"], i_c_mit=params["imit"])
            state = (PTMState.METALLIC if params.get("state") == "met"
                     else PTMState.INSULATING)
            lp.end_of_line()
            circuit.add(PTM(head.text, n1, n2, pp, state))
        else:
            raise ParseError(f"unknown element card {head.text[0]!r}", lineno,
                             head.col, head.text,
                             ("R", "C", "V", "I", "M", "P", ".options", ".end"))

    if options:
        v_dd = options.pop("vdd", circuit.v_dd)
        if v_dd <= 0:
            raise ParseError("vdd must be > 0", 1, 1, str(v_dd), ("vdd>0",))
        circuit.v_dd = float(v_dd)
        base = circuit.options
        rename = {"abstol": "abstol_current", "method": "integration_method"}
        changes = {rename.get(k, k): v for k, v in options.items()}
        circuit.options = base.with_(**changes)
    circuit.elaborate()
    return circuit


# -- printer ---------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def _profile_text(profile) -> str:
    if isinstance(profile, PWL):
        inner = " ".join(f"{_fmt(t)} {_fmt(v)}" for t, v in profile.points)
        return f"pwl({inner})"
    return f"dc {_fmt(profile)}"


def _element_line(el) -> str:
    if isinstance(el, Resistor):
        return f"{el.name} {el.n1} {el.n2} {_fmt(el.ohms)}"
    if isinstance(el, Capacitor):
        return f"{el.name} {el.n1} {el.n2} {_fmt(el.farads)}"
    if isinstance(el, VoltageSource):
        return f"{el.name} {el.pos} {el.neg} {_profile_text(el.value)}"
    if isinstance(el, CurrentSource):
        return f"{el.name} {el.pos} {el.neg} {_profile_text(el.value)}"
    if isinstance(el, FinFET):
        p = el.params
        return (f"{el.name} {el.drain} {el.gate} {el.source} "
                f"type={p.polarity} vth={_fmt(p.v_th)} nfin={p.n_fin} "
                f"k={_fmt(p.k)} nss={_fmt(p.n_ss)} alpha={_fmt(p.alpha_sat)} "
                f"lambda={_fmt(p.lambda_clm)} dvth={_fmt(p.delta_v_th)} "
                f"phit={_fmt(p.phi_t)}")
    if isinstance(el, PTM):
        p = el.params
        return (f"{el.name} {el.n1} {el.n2} rhoins={_fmt(p.rho_ins)} "
                f"rhomet={_fmt(p.rho_met)} l={_fmt(p.l_ptm)} "
                f"area={_fmt(p.area)} vimt={_fmt(p.v_c_imt)} "
                f"imit={_fmt(p.i_c_mit)} state={el.initial_state.value}")
    raise TypeError(f"unknown element type {type(el)!r}")


def print_netlist(circuit: Circuit) -> str:
    """Canonical netlist text: elements sorted by name, full-precision
    numbers, non-default options on a single ``.options`` line."""
    lines = [_element_line(el) for el in
             sorted(circuit.elements, key=lambda e: e.name)]
    defaults = SolverOptions()
    opts = []
    if circuit.v_dd != 0.8:
        opts.append(f"vdd={_fmt(circuit.v_dd)}")
    o = circuit.options
    for key, attr in (("abstol", "abstol_current"), ("reltol", "reltol"),
                      ("vntol", "vntol"), ("dt_initial", "dt_initial"),
                      ("dt_min", "dt_min"), ("dt_max", "dt_max")):
        if getattr(o, attr) != getattr(defaults, attr):
            opts.append(f"{key}={_fmt(getattr(o, attr))}")
    for key, attr in (("max_newton_iters", "max_newton_iters"),
                      ("max_state_resolution_iters",
                       "max_state_resolution_iters")):
        if getattr(o, attr) != getattr(defaults, attr):
            opts.append(f"{key}={getattr(o, attr)}")
    if o.integration_method != defaults.integration_method:
        short = "trap" if o.integration_method == "trapezoidal" else "be"
        opts.append(f"method={short}")
    if opts:
        lines.append(".options " + " ".join(opts))
    lines.append(".end")
    return "\n".join(lines) + "\n"


def circuits_equal(a: Circuit, b: Circuit) -> bool:
    """Structural equality: same elements field-by-field (order-insensitive),
    same supply and options."""
    if a.v_dd != b.v_dd or a.options != b.options:
        return False
    ea = sorted(a.elements, key=lambda e: e.name)
    eb = sorted(b.elements, key=lambda e: e.name)
    if len(ea) != len(eb):
        return False
    return all(x == y for x, y in zip(ea, eb))
