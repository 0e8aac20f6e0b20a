"""Built-in task domains with exact oracles.

LINSYS: randomly generated linear systems with a unique integer solution,
solved by rewriting moves; the elimination oracle certifies solvability and
the BFS oracle gives exact minimal derivation lengths on small instances.

SYNTH-DAG: an explicit labeled graph embedded into the same state/move
machinery, small enough for exhaustive equivalence tests against textbook
shortest path.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional

from . import core
from .core import (
    ConstraintContext,
    Equation,
    GoalSpec,
    Move,
    State,
    canonical_equation,
    canonicalize,
    goal_test,
    serialize_state,
)

VAR_NAMES = ("x", "y", "z", "u")


class SearchSpaceExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Problem:
    problem_id: str
    initial: State
    goal: GoalSpec
    difficulty_bin: int = 1
    gen_seed: int = 0


# ---------------------------------------------------------------------------
# elimination oracle


def unique_solution(trace: tuple[Equation, ...],
                    variables: tuple[str, ...]) -> Optional[dict[str, Fraction]]:
    """Exact Gaussian elimination; None unless the system has one solution."""
    rows = [[eq.coefficient(v) for v in variables] + [eq.constant] for eq in trace]
    n = len(variables)
    if len(rows) < n:
        return None
    pivot_rows = []
    used = set()
    for col in range(n):
        pivot = next((r for r in range(len(rows))
                      if r not in used and rows[r][col] != 0), None)
        if pivot is None:
            return None
        used.add(pivot)
        pivot_rows.append((col, pivot))
        for r in range(len(rows)):
            if r != pivot and rows[r][col] != 0:
                factor = rows[r][col] / rows[pivot][col]
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[pivot])]
    for r in range(len(rows)):
        if r not in used and rows[r][-1] != 0:
            return None  # inconsistent leftover row
    return {variables[col]: rows[r][-1] / rows[r][col] for col, r in pivot_rows}


# ---------------------------------------------------------------------------
# problem generation


def gen_problem(seed: int, n_vars: int | tuple[int, int] = (2, 3),
                coeff_range: int = 5, max_witness: int = 24,
                bfs_bound: int | None = None) -> Problem:
    """Random dense integer-solution system with a unique solution, goal set
    to the value of one variable. Resamples internally on degenerate draws;
    every emitted problem carries a derivation witness within max_witness
    moves, so it is solvable by the engine's move set. An optional bfs_bound
    additionally requires a shortest derivation of at most that many moves
    (desk-scale benchmark corpora use this to keep solves shallow)."""
    rng = random.Random(f"linsys:{seed}")
    while True:
        if isinstance(n_vars, int):
            k = n_vars
        else:
            k = rng.randint(n_vars[0], n_vars[1])
        if not 2 <= k <= 4:
            raise ValueError("variable count must be in [2, 4]")
        variables = VAR_NAMES[:k]
        solution = {v: Fraction(rng.randint(-4, 4)) for v in variables}
        nonzero = [c for c in range(-coeff_range, coeff_range + 1) if c != 0]
        trace = []
        for _ in range(k):
            coeffs = {v: Fraction(rng.choice(nonzero)) for v in variables}
            constant = sum((coeffs[v] * solution[v] for v in variables), Fraction(0))
            trace.append(canonical_equation(Equation.make(coeffs, constant)))
        trace = tuple(trace)
        if unique_solution(trace, variables) != solution:
            continue
        goal_var = rng.choice(variables)
        goal = GoalSpec(goal_var, solution[goal_var])
        initial = State(0, trace, ConstraintContext.make(), goal)
        problem = Problem(f"lin{k}-{seed}", initial, goal, gen_seed=seed)
        if derivation_witness(problem, max_witness) is None:
            continue
        if bfs_bound is not None:
            steps = bfs_min_steps(problem, max_depth=bfs_bound)
            if steps is None:
                continue
        return problem


def derivation_witness(problem: Problem,
                       max_moves: int = 24) -> Optional[list[Move]]:
    """A concrete move sequence solving the problem: isolate-normalized
    Gaussian elimination (so addmul only ever needs multiplier +-1), then
    back-substitution until the goal variable is bound. Every claim is the
    exact recomputation, so the verifier accepts each step."""
    w = canonicalize(problem.initial)
    variables = sorted({v for eq in w.trace for v in eq.variables()})
    moves: list[Move] = []

    def emit(op: str, args: tuple) -> bool:
        nonlocal w
        m = core.exact_move(w, op, args)
        if m is None:
            return False
        if core.claims_match(m.claim, w.trace[args[0] - 1]):
            return True  # identity after canonicalization; skip
        moves.append(m)
        w = canonicalize(core.apply(w, m))
        return True

    unpivoted = set(range(1, len(w.trace) + 1))
    pivots: list[tuple[str, int]] = []
    for v in variables:
        p = next((i for i in sorted(unpivoted) if w.trace[i - 1].coefficient(v) != 0),
                 None)
        if p is None:
            return None
        if not emit("isolate", (p, v)):
            return None
        for i in sorted(unpivoted):
            if i == p or w.trace[i - 1].coefficient(v) == 0:
                continue
            if not emit("isolate", (i, v)):
                return None
            c = -(w.trace[i - 1].coefficient(v) / w.trace[p - 1].coefficient(v))
            if not emit("addmul", (i, p, c)):
                return None
        unpivoted.discard(p)
        pivots.append((v, p))
    for v, p in reversed(pivots):
        if goal_test(w, problem.goal):
            break
        if not emit("isolate", (p, v)):
            return None
    if not goal_test(w, problem.goal) or len(moves) > max_moves:
        return None
    return moves


# ---------------------------------------------------------------------------
# breadth-first derivation oracle


def bfs_min_steps(problem: Problem,
                  moves_fn: Callable[[State], list[Move]] | None = None,
                  max_states: int = 50_000,
                  max_depth: int = 12) -> Optional[int]:
    """Minimal number of correct-claim moves from the initial state to the
    goal, by breadth-first search over canonical states; None if unreachable
    within the caps. Raises SearchSpaceExceeded past max_states."""
    if moves_fn is None:
        def moves_fn(w: State) -> list[Move]:
            out = []
            for op, args in core.move_templates(w):
                m = core.exact_move(w, op, args)
                if m is not None:
                    out.append(m)
            return out

    start = canonicalize(replace(problem.initial, remaining_budget=0))
    if goal_test(start, problem.goal):
        return 0
    seen = {serialize_state(start)}
    frontier = [start]
    for depth in range(1, max_depth + 1):
        next_frontier = []
        for w in frontier:
            for m in moves_fn(w):
                child = canonicalize(core.apply(w, m))
                key = serialize_state(child)
                if key in seen:
                    continue
                if goal_test(child, problem.goal):
                    return depth
                seen.add(key)
                if len(seen) > max_states:
                    raise SearchSpaceExceeded(f"more than {max_states} states")
                next_frontier.append(child)
        if not next_frontier:
            return None
        frontier = next_frontier
    return None


# ---------------------------------------------------------------------------
# SYNTH-DAG: explicit labeled graph over the same move machinery

DAG_VAR = "n"
DAG_AUX = "z"


@dataclass(frozen=True)
class DagDomain:
    """Acyclic labeled graph. Node k is the state whose single trace equation
    is 1*n + 1*z = k (or 1*n = k for goal nodes, whose claim binds n and
    triggers the any-value goal test). An edge (u, label, v) is the move
    scale(1, label) claiming the encoding of v."""

    problem_id: str
    n_nodes: int
    edges: tuple[tuple[int, int, int], ...]  # (source, label, target)
    start: int
    goals: frozenset[int]

    def encode(self, node: int) -> Equation:
        if node in self.goals:
            return Equation.make({DAG_VAR: Fraction(1)}, Fraction(node))
        return Equation.make({DAG_VAR: Fraction(1), DAG_AUX: Fraction(1)},
                             Fraction(node))

    def node_of(self, w: State) -> Optional[int]:
        eq = w.trace[0]
        if [v for v, _ in eq.terms] in ([DAG_VAR], [DAG_VAR, DAG_AUX]):
            return int(eq.constant)
        return None

    def edge_move(self, label: int, target: int) -> Move:
        return Move("scale", (1, Fraction(label)), self.encode(target))

    def out_edges(self, node: int) -> list[tuple[int, int]]:
        return [(label, t) for s, label, t in self.edges if s == node]

    def moves_fn(self, w: State) -> list[Move]:
        node = self.node_of(w)
        if node is None or node in self.goals:
            return []
        return [self.edge_move(label, t) for label, t in self.out_edges(node)]

    def labeler(self, w: State, m: Move) -> bool:
        """Verifier acceptance: the move is a real edge out of the current
        node and its claim is exactly the target encoding."""
        node = self.node_of(w)
        if node is None or m.op != "scale" or len(m.args) != 2 or m.args[0] != 1:
            return False
        for label, target in self.out_edges(node):
            if m.args[1] == Fraction(label):
                return core.claims_match(m.claim, self.encode(target))
        return False

    def problem(self) -> Problem:
        goal = GoalSpec(DAG_VAR, None)
        initial = State(0, (self.encode(self.start),), ConstraintContext.make(), goal)
        return Problem(self.problem_id, initial, goal)


@dataclass
class DagGenerator:
    """Proposes every true out-edge plus optional junk candidates (wrong-claim
    and malformed moves) that gates or the verifier must reject."""

    dag: DagDomain
    rng_seed: int = 0
    noise_per_state: int = 0
    n_gen: int = 0  # unused; edges are enumerated exhaustively

    def propose(self, w: State, rng: random.Random, n: int | None = None) -> list[Move]:
        moves = self.dag.moves_fn(w)
        node = self.dag.node_of(w)
        for _ in range(self.noise_per_state):
            kind = rng.random()
            if kind < 0.5 and node is not None:
                # claims a node that is not where this edge label goes
                fake = rng.randrange(1, self.dag.n_nodes + 1)
                moves.append(Move("scale", (1, Fraction(991)), self.dag.encode(fake)))
            else:
                moves.append(Move("scale", (rng.randrange(5, 9), Fraction(1)),
                                  self.dag.encode(1)))
        return moves


def random_dag(seed: int, n_nodes: int = 18, max_out: int = 3,
               n_goals: int = 2) -> DagDomain:
    """Layered random DAG (edges only run forward); the start node is never a
    goal, and goals may be unreachable by construction."""
    rng = random.Random(f"dag:{seed}")
    edges = []
    for u in range(1, n_nodes):
        targets = list(range(u + 1, n_nodes + 1))
        rng.shuffle(targets)
        for label, t in enumerate(targets[:rng.randint(0, max_out)], start=1):
            edges.append((u, label, t))
    goals = frozenset(rng.sample(range(2, n_nodes + 1), min(n_goals, n_nodes - 1)))
    return DagDomain(f"dag-{seed}", n_nodes, tuple(edges), 1, goals)


def dag_reachable(dag: DagDomain) -> Optional[int]:
    """Textbook BFS over the adjacency list; independent of the move
    machinery. Returns the hop count to the nearest goal, or None."""
    frontier = [dag.start]
    seen = {dag.start}
    depth = 0
    while frontier:
        depth += 1
        nxt = []
        for u in frontier:
            for _, t in dag.out_edges(u):
                if t in dag.goals:
                    return depth
                if t not in seen:
                    seen.add(t)
                    nxt.append(t)
        frontier = nxt
    return None


# ---------------------------------------------------------------------------
# difficulty binning


def bin_difficulty(problems: list[Problem], gen, *, n_samples: int = 64,
                   seed: int = 0, max_steps: int = 24) -> list[Problem]:
    """Assign quintile difficulty bins from the unverified greedy pass rate
    (fraction of n_samples rollouts whose answer matches the goal), mirroring
    pass@1 estimation from fixed samples. Ties break by problem_id; bin sizes
    differ by at most one."""
    from . import engine  # local import; engine does not import this module

    if len(problems) < 5:
        raise ValueError("binning needs at least 5 problems")
    rates = []
    for p in problems:
        hits = 0
        for i in range(n_samples):
            rng = random.Random(f"bin:{seed}:{p.problem_id}:{i}")
            answer, _, _ = engine.greedy_rollout(p, gen, rng, max_steps)
            if answer is not None and answer == p.goal.target_value:
                hits += 1
        rates.append(hits / n_samples)
    order = sorted(range(len(problems)),
                   key=lambda i: (-rates[i], problems[i].problem_id))
    n = len(problems)
    base, extra = divmod(n, 5)
    sizes = [base + (1 if b < extra else 0) for b in range(5)]
    binned = list(problems)
    pos = 0
    for b, size in enumerate(sizes, start=1):
        for i in order[pos:pos + size]:
            binned[i] = replace(problems[i], difficulty_bin=b)
        pos += size
    return binned


# ---------------------------------------------------------------------------
# persistence


def problem_to_json(p: Problem) -> str:
    return json.dumps({
        "problem_id": p.problem_id,
        "state": serialize_state(p.initial),
        "gen_seed": p.gen_seed,
        "difficulty_bin": p.difficulty_bin,
    }, sort_keys=True)


def problem_from_json(text: str) -> Problem:
    doc = json.loads(text)
    initial = core.parse_state(doc["state"])
    return Problem(doc["problem_id"], initial, initial.goal,
                   doc.get("difficulty_bin", 1), doc.get("gen_seed", 0))


def write_corpus(problems: list[Problem], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in problems:
            fh.write(problem_to_json(p) + "\n")


def read_corpus(path: str) -> list[Problem]:
    with open(path, encoding="utf-8") as fh:
        return [problem_from_json(line) for line in fh if line.strip()]
