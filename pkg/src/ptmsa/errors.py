"""Exception types shared across the simulator."""

from __future__ import annotations


class SimulationError(Exception):
    """Base class for all simulator errors."""


class SingularStructure(SimulationError):
    """A node has no conductive path to ground and no capacitor."""


class NewtonDivergence(SimulationError):
    """Newton iteration failed to converge, including the source-stepping fallback."""


class NoConsistentState(SimulationError):
    """No assignment of discrete PTM states is a fixed point at this bias."""


class StateChatter(SimulationError):
    """PTM state resolution did not reach a fixed point within its iteration budget."""


class StepFailure(SimulationError):
    """Transient step failed to converge even at the minimum timestep."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class BracketFailure(SimulationError):
    """Root bracketing failed where the branch equation should be monotone."""


class ParseError(SimulationError):
    """Netlist syntax error with 1-based position information."""

    def __init__(self, message: str, line: int, column: int,
                 token: str = "", expected: tuple[str, ...] = ()):
        detail = f"line {line}, column {column}: {message}"
        if token:
            detail += f" (got {token!r})"
        if expected:
            detail += " (expected " + " | ".join(expected) + ")"
        super().__init__(detail)
        self.line = line
        self.column = column
        self.token = token
        self.expected = expected


class DuplicateName(SimulationError):
    """Two elements in one circuit share a name."""


class UnknownNode(SimulationError):
    """A directive referenced a node that no element declares."""


class InvalidParams(SimulationError):
    """Topology or schedule parameters are inconsistent with the requested build."""


class OutOfRange(SimulationError):
    """A requested inversion target is not reachable within the allowed range."""


class AllSamplesFailed(SimulationError):
    """Every Monte Carlo sample failed; no statistics can be formed."""
