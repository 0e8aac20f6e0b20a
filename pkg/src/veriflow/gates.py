"""Deterministic feasibility gates: necessary-condition filters that reject
moves with explicit interface or constraint violations before any verifier
cost. Passing both gates never implies the verifier will accept; failing
either gate means an explicit, machine-checkable violation.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .core import (
    ConstraintContext,
    Equation,
    Move,
    State,
    canonical_equation,
    claim_delta,
    eq_substitute,
    state_scope,
    _ARG_SIG,
)

# enumerated failure codes; tests assert on the specific violated condition
OK = "ok"
UNKNOWN_OP = "unknown-op"
BAD_ARITY = "bad-arity"
BAD_ARGUMENT = "bad-argument"
INDEX_OUT_OF_RANGE = "index-out-of-range"
ZERO_MULTIPLIER = "zero-multiplier"
UNKNOWN_VARIABLE = "unknown-variable"
ISOLATE_ZERO_COEFF = "isolate-zero-coefficient"
CLAIM_OUT_OF_SCOPE = "claim-out-of-scope"
BINDING_CONFLICT = "binding-conflict"
CLAIM_CONTRADICTION = "claim-contradiction"


@dataclass(frozen=True)
class GateReport:
    passed: bool
    gate: str  # structural | context
    reason: str
    detail: str = ""


@dataclass(frozen=True)
class ConstraintDelta:
    """Constraints newly introduced by a move's claim."""

    new_bindings: tuple[tuple[str, Fraction], ...]
    new_equations: frozenset[Equation]


def _fail(gate: str, reason: str, detail: str = "") -> GateReport:
    return GateReport(False, gate, reason, detail)


def gate_struct(w: State, m: Move) -> GateReport:
    """Structural compatibility: operator known, arity and argument types
    right, indices in range, variables in scope, multipliers nonzero, isolate
    target present, claim over in-scope variables."""
    sig = _ARG_SIG.get(m.op)
    if sig is None:
        return _fail("structural", UNKNOWN_OP, m.op)
    if len(m.args) != len(sig):
        return _fail("structural", BAD_ARITY, f"{m.op} takes {len(sig)} args")
    scope = state_scope(w)
    for kind, arg in zip(sig, m.args):
        if kind == "i":
            if not isinstance(arg, int) or isinstance(arg, bool):
                return _fail("structural", BAD_ARGUMENT, f"index {arg!r}")
            if not 1 <= arg <= len(w.trace):
                return _fail("structural", INDEX_OUT_OF_RANGE, str(arg))
        elif kind == "r":
            if not isinstance(arg, Fraction):
                return _fail("structural", BAD_ARGUMENT, f"rational {arg!r}")
            if arg == 0:
                return _fail("structural", ZERO_MULTIPLIER)
        else:
            if not isinstance(arg, str):
                return _fail("structural", BAD_ARGUMENT, f"variable {arg!r}")
            if arg not in scope:
                return _fail("structural", UNKNOWN_VARIABLE, arg)
    if m.op == "isolate":
        i, v = m.args
        if w.trace[i - 1].coefficient(v) == 0:
            return _fail("structural", ISOLATE_ZERO_COEFF, v)
    bad = [v for v in m.claim.variables() if v not in scope]
    if bad:
        return _fail("structural", CLAIM_OUT_OF_SCOPE, ",".join(bad))
    return GateReport(True, "structural", OK)


def extract_ctx(w: State) -> ConstraintContext:
    """The tracked constraint set of w: bindings plus established equations."""
    return w.context


def compute_delta(w: State, m: Move) -> ConstraintDelta:
    bindings, canon = claim_delta(m.claim)
    return ConstraintDelta(tuple(sorted(bindings.items())), frozenset([canon]))


def _consistent(ctx: ConstraintContext, delta: ConstraintDelta) -> bool:
    """No variable bound to two distinct values across ctx and delta."""
    bound = ctx.binding_map()
    for v, val in delta.new_bindings:
        if v in bound and bound[v] != val:
            return False
    return True


def _violates(ctx: ConstraintContext, m: Move) -> bool:
    """Substitute every known binding into the claim; a fully-ground claim
    that fails its own arithmetic contradicts the context."""
    eq = m.claim
    for v, val in ctx.bindings:
        eq = eq_substitute(eq, v, val)
    if eq.terms:
        return False  # not fully ground; nothing checkable
    return canonical_equation(eq).constant != 0


def gate_ctx(w: State, m: Move) -> GateReport:
    """Constraint compatibility against the tracked context (exact rational
    checks only; no theory solving)."""
    ctx = extract_ctx(w)
    delta = compute_delta(w, m)
    if not _consistent(ctx, delta):
        return _fail("context", BINDING_CONFLICT)
    if _violates(ctx, m):
        return _fail("context", CLAIM_CONTRADICTION)
    return GateReport(True, "context", OK)


def gate_check(w: State, m: Move) -> GateReport:
    """Both gates in order; the first failure wins."""
    report = gate_struct(w, m)
    if not report.passed:
        return report
    return gate_ctx(w, m)


def gate_filter(w: State, moves: list[Move]) -> tuple[list[Move], list[GateReport]]:
    """Stable-order subsequence of moves passing both gates, with a report per
    input. Consumes zero verifier budget by construction."""
    reports = [gate_check(w, m) for m in moves]
    survivors = [m for m, r in zip(moves, reports) if r.passed]
    return survivors, reports
