"""Structured move interface over exact-rational linear equations.

States hold an ordered trace of equations, a constraint context of derived
single-variable bindings, and a goal. Moves are (op, args, claim) triples:
the claim is the *asserted* result equation, trusted by `apply` and checked
by the verifier via `exact_result`. All arithmetic is `fractions.Fraction`;
no floats ever enter a state.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from hashlib import blake2b
from typing import Iterable, Optional

OPS = ("scale", "addmul", "isolate", "subst")

# arg signature per operator: i = 1-based equation index, r = rational, v = variable
_ARG_SIG = {
    "scale": "ir",
    "addmul": "iir",
    "isolate": "iv",
    "subst": "iv",
}


class ParseError(ValueError):
    """Input does not match the move/equation grammar."""

    def __init__(self, offset: int, expected: str):
        super().__init__(f"parse error at offset {offset}: expected {expected}")
        self.offset = offset
        self.expected = expected


class StructuralError(ValueError):
    """Move cannot be applied to the state (defensive; gated callers never hit this)."""


@dataclass(frozen=True)
class Equation:
    """Linear equation sum(c_i * v_i) = constant.

    `terms` is sorted by variable name and contains no zero coefficients;
    use `make` instead of the raw constructor.
    """

    terms: tuple[tuple[str, Fraction], ...]
    constant: Fraction

    @staticmethod
    def make(coeffs: dict[str, Fraction], constant) -> "Equation":
        terms = tuple(
            (v, Fraction(c)) for v, c in sorted(coeffs.items()) if c != 0
        )
        return Equation(terms, Fraction(constant))

    def coefficient(self, var: str) -> Fraction:
        for v, c in self.terms:
            if v == var:
                return c
        return Fraction(0)

    def variables(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self.terms)


def eq_scale(eq: Equation, c: Fraction) -> Equation:
    return Equation.make({v: k * c for v, k in eq.terms}, eq.constant * c)


def eq_add(a: Equation, b: Equation) -> Equation:
    coeffs = {v: c for v, c in a.terms}
    for v, c in b.terms:
        coeffs[v] = coeffs.get(v, Fraction(0)) + c
    return Equation.make(coeffs, a.constant + b.constant)


def eq_substitute(eq: Equation, var: str, value: Fraction) -> Equation:
    """Replace `var` by a known value, folding it into the constant."""
    c = eq.coefficient(var)
    if c == 0:
        return eq
    coeffs = {v: k for v, k in eq.terms if v != var}
    return Equation.make(coeffs, eq.constant - c * value)


def canonical_equation(eq: Equation) -> Equation:
    """Sign convention: first nonzero coefficient (sorted order) positive.

    Degenerate equations with no variables normalize the constant instead.
    """
    if eq.terms:
        lead = eq.terms[0][1]
    else:
        lead = eq.constant
    if lead < 0:
        return eq_scale(eq, Fraction(-1))
    return eq


@dataclass(frozen=True)
class ConstraintContext:
    """Derived facts: single-variable bindings plus established canonical equations."""

    bindings: tuple[tuple[str, Fraction], ...] = ()
    invariants_set: frozenset[Equation] = frozenset()

    @staticmethod
    def make(bindings: dict[str, Fraction] | None = None,
             invariants: Iterable[Equation] = ()) -> "ConstraintContext":
        items = tuple(sorted((bindings or {}).items()))
        return ConstraintContext(items, frozenset(canonical_equation(e) for e in invariants))

    def binding_map(self) -> dict[str, Fraction]:
        return dict(self.bindings)


@dataclass(frozen=True)
class GoalSpec:
    """Target variable and its required value; value None means any binding counts."""

    target_variable: str
    target_value: Optional[Fraction] = None


@dataclass(frozen=True)
class State:
    remaining_budget: int
    trace: tuple[Equation, ...]
    context: ConstraintContext
    goal: GoalSpec
    depth: int = 0


@dataclass(frozen=True)
class Move:
    """Structured next-step hypothesis; the claim is asserted, not guaranteed."""

    op: str
    args: tuple
    claim: Equation


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[tuple[State, Move], ...]
    outcome: str  # solved | budget-exhausted | step-limit
    final_state: State
    final_answer: Optional[Fraction] = None

    def __len__(self) -> int:
        return len(self.steps)


# ---------------------------------------------------------------------------
# rendering


def render_rational(x: Fraction) -> str:
    return str(x)


def render_equation(eq: Equation) -> str:
    if not eq.terms:
        lhs = "0"
    else:
        lhs = "+".join(f"{render_rational(c)}*{v}" for v, c in eq.terms)
    return f"{lhs}={render_rational(eq.constant)}"


def render_goal(goal: GoalSpec) -> str:
    value = "any" if goal.target_value is None else render_rational(goal.target_value)
    return f"goal: {goal.target_variable}={value}"


def serialize_move(m: Move) -> str:
    parts = []
    for a in m.args:
        if isinstance(a, str):
            parts.append(a)
        elif isinstance(a, Fraction):
            parts.append(render_rational(a))
        else:
            parts.append(str(int(a)))
    return f"{m.op}({','.join(parts)}|{render_equation(m.claim)})"


def serialize_state(w: State) -> str:
    """Canonical text form: one equation per line, then bindings, then the goal.

    Budget and depth are deliberately excluded so that the serialization
    identifies the search-relevant content of a state.
    """
    w = canonicalize(w)
    lines = [render_equation(eq) for eq in w.trace]
    ctx = " ".join(f"{v}={render_rational(val)}" for v, val in w.context.bindings)
    lines.append(f"ctx: {ctx}" if ctx else "ctx:")
    lines.append(render_goal(w.goal))
    return "\n".join(lines)


def state_id(w: State) -> str:
    return blake2b(serialize_state(w).encode(), digest_size=8).hexdigest()


# ---------------------------------------------------------------------------
# parsing


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise ParseError(self.pos, repr(ch))
        self.pos += 1

    def name(self) -> str:
        start = self.pos
        if not self.peek().isalpha() or not self.peek().islower():
            raise ParseError(self.pos, "name")
        while self.peek().islower() or self.peek().isdigit():
            self.pos += 1
        return self.text[start:self.pos]

    def digits(self) -> str:
        start = self.pos
        while self.peek().isdigit():
            self.pos += 1
        if start == self.pos:
            raise ParseError(self.pos, "digits")
        return self.text[start:self.pos]

    def rational(self) -> Fraction:
        start = self.pos
        if self.peek() == "-":
            self.pos += 1
        num = self.digits()
        if self.peek() == "/":
            self.pos += 1
            den = self.digits()
            if int(den) == 0:
                raise ParseError(start, "nonzero denominator")
            return Fraction(f"-{num}/{den}" if self.text[start] == "-" else f"{num}/{den}")
        return Fraction(f"-{num}" if self.text[start] == "-" else num)

    def index(self) -> int:
        start = self.pos
        value = int(self.digits())
        if value < 1:
            raise ParseError(start, "index >= 1")
        return value


def _parse_equation(sc: _Scanner) -> Equation:
    coeffs: dict[str, Fraction] = {}
    if sc.peek() == "0" and sc.pos + 1 < len(sc.text) and sc.text[sc.pos + 1] == "=":
        sc.pos += 1
    else:
        while True:
            c = sc.rational()
            sc.expect("*")
            v = sc.name()
            coeffs[v] = coeffs.get(v, Fraction(0)) + c
            if sc.peek() == "+":
                sc.pos += 1
                continue
            break
    sc.expect("=")
    constant = sc.rational()
    return Equation.make(coeffs, constant)


def parse_equation(text: str) -> Equation:
    sc = _Scanner(text)
    eq = _parse_equation(sc)
    if sc.pos != len(text):
        raise ParseError(sc.pos, "end of input")
    return eq


def parse_move(text: str) -> Move:
    """Parse `op(arg1,arg2,...|claim)`; total and deterministic over byte strings."""
    sc = _Scanner(text)
    op = sc.name()
    if op not in _ARG_SIG:
        raise ParseError(0, f"operator in {OPS}")
    sc.expect("(")
    args = []
    for n, kind in enumerate(_ARG_SIG[op]):
        if n:
            sc.expect(",")
        if kind == "i":
            args.append(sc.index())
        elif kind == "r":
            args.append(sc.rational())
        else:
            args.append(sc.name())
    sc.expect("|")
    claim = _parse_equation(sc)
    sc.expect(")")
    if sc.pos != len(text):
        raise ParseError(sc.pos, "end of input")
    return Move(op, tuple(args), claim)


def parse_state(text: str, goal: GoalSpec | None = None,
                remaining_budget: int = 0) -> State:
    """Inverse of `serialize_state` (budget/depth are not serialized; pass them in)."""
    lines = text.splitlines()
    trace = []
    i = 0
    while i < len(lines) and not lines[i].startswith("ctx:"):
        trace.append(parse_equation(lines[i]))
        i += 1
    if i == len(lines):
        raise ParseError(len(text), "ctx: line")
    bindings: dict[str, Fraction] = {}
    ctx_body = lines[i][len("ctx:"):].strip()
    if ctx_body:
        for part in ctx_body.split(" "):
            v, val = part.split("=", 1)
            bindings[v] = Fraction(val)
    i += 1
    if goal is None:
        if i == len(lines) or not lines[i].startswith("goal: "):
            raise ParseError(len(text), "goal: line")
        var, value = lines[i][len("goal: "):].split("=", 1)
        goal = GoalSpec(var, None if value == "any" else Fraction(value))
    return State(remaining_budget, tuple(trace), ConstraintContext.make(bindings), goal)


# ---------------------------------------------------------------------------
# semantics


def state_scope(w: State) -> frozenset[str]:
    """Variables visible at w: trace variables, bound variables, and the goal's."""
    names = {v for eq in w.trace for v in eq.variables()}
    names.update(v for v, _ in w.context.bindings)
    names.add(w.goal.target_variable)
    return frozenset(names)


def claim_delta(claim: Equation) -> tuple[dict[str, Fraction], Equation]:
    """Constraints introduced by asserting `claim`: a binding when it is
    single-variable (a*v=c, a != 0), plus the canonical claim itself."""
    canon = canonical_equation(claim)
    bindings: dict[str, Fraction] = {}
    if len(canon.terms) == 1:
        v, a = canon.terms[0]
        bindings[v] = canon.constant / a
    return bindings, canon


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise StructuralError(msg)


def apply(w: State, m: Move) -> State:
    """Replace the targeted equation with the move's claim and fold its delta
    into the context. The claim is trusted here; semantic truth is checked by
    the verifier, not by apply. Pure: identical inputs give identical outputs.
    """
    _require(m.op in _ARG_SIG, f"unknown op {m.op!r}")
    _require(len(m.args) == len(_ARG_SIG[m.op]), "bad arity")
    target = m.args[0]
    _require(isinstance(target, int) and 1 <= target <= len(w.trace),
             f"index {target} out of range")
    if m.op == "addmul":
        other = m.args[1]
        _require(isinstance(other, int) and 1 <= other <= len(w.trace),
                 f"index {other} out of range")
    trace = list(w.trace)
    trace[target - 1] = m.claim
    new_bindings, canon_claim = claim_delta(m.claim)
    merged = w.context.binding_map()
    merged.update(new_bindings)
    context = ConstraintContext.make(
        merged, set(w.context.invariants_set) | {canon_claim})
    return State(w.remaining_budget, tuple(trace), context, w.goal, w.depth + 1)


def canonicalize(w: State) -> State:
    """Normalize every trace equation's sign; trace order is preserved because
    operators replace equations in place, so position is stable across
    derivations of the same system."""
    return replace(w, trace=tuple(canonical_equation(eq) for eq in w.trace))


def goal_test(w: State, g: GoalSpec | None = None) -> bool:
    g = g or w.goal
    bound = w.context.binding_map().get(g.target_variable)
    if bound is None:
        return False
    return g.target_value is None or bound == g.target_value


def exact_result(w: State, m: Move) -> Optional[Equation]:
    """Exact recomputation of op(args) at w, or None when inapplicable.

    This is the single source of operator semantics: the verifier accepts a
    move exactly when its claim canonically equals this result.
      scale(i, c):    c * eq_i, c != 0
      addmul(i, j, c): eq_i + c * eq_j, c != 0
      isolate(i, v):  eq_i with other bound variables substituted, divided by
                      the (nonzero) coefficient of v
      subst(i, v):    eq_i with the context binding of v substituted
                      (identity when v is unbound or absent)
    """
    if m.op not in _ARG_SIG or len(m.args) != len(_ARG_SIG[m.op]):
        return None
    i = m.args[0]
    if not isinstance(i, int) or not 1 <= i <= len(w.trace):
        return None
    eq = w.trace[i - 1]
    bindings = w.context.binding_map()
    if m.op == "scale":
        c = m.args[1]
        if not isinstance(c, Fraction) or c == 0:
            return None
        return eq_scale(eq, c)
    if m.op == "addmul":
        j, c = m.args[1], m.args[2]
        if not isinstance(j, int) or not 1 <= j <= len(w.trace):
            return None
        if not isinstance(c, Fraction) or c == 0:
            return None
        return eq_add(eq, eq_scale(w.trace[j - 1], c))
    if m.op == "isolate":
        v = m.args[1]
        if not isinstance(v, str):
            return None
        for other in eq.variables():
            if other != v and other in bindings:
                eq = eq_substitute(eq, other, bindings[other])
        a = eq.coefficient(v)
        if a == 0:
            return None
        return eq_scale(eq, 1 / a)
    # subst
    v = m.args[1]
    if not isinstance(v, str):
        return None
    if v in bindings:
        return eq_substitute(eq, v, bindings[v])
    return eq


def claims_match(claim: Equation, result: Equation) -> bool:
    return canonical_equation(claim) == canonical_equation(result)


# multipliers available to the generator and the search oracle; scale skips
# +-1 because division by the leading sign is an identity after
# canonicalization
ADDMUL_MULTIPLIERS = tuple(Fraction(c) for c in (-3, -2, -1, 1, 2, 3))
SCALE_MULTIPLIERS = tuple(Fraction(c) for c in (-3, -2, 2, 3))


def move_templates(w: State) -> list[tuple[str, tuple]]:
    """All (op, args) applicable at w under the bounded multiplier sets.
    subst is only offered where it changes the equation (bound variable with
    a nonzero coefficient)."""
    n = len(w.trace)
    bound = w.context.binding_map()
    out: list[tuple[str, tuple]] = []
    for i in range(1, n + 1):
        for c in SCALE_MULTIPLIERS:
            out.append(("scale", (i, c)))
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i == j:
                continue
            for c in ADDMUL_MULTIPLIERS:
                out.append(("addmul", (i, j, c)))
    for i, eq in enumerate(w.trace, start=1):
        for v in eq.variables():
            out.append(("isolate", (i, v)))
            if v in bound:
                out.append(("subst", (i, v)))
    return out


def exact_move(w: State, op: str, args: tuple) -> Optional[Move]:
    """Instantiate the template with its exactly-recomputed canonical claim."""
    probe = Move(op, args, Equation.make({}, Fraction(0)))
    result = exact_result(w, probe)
    if result is None:
        return None
    return Move(op, args, canonical_equation(result))
