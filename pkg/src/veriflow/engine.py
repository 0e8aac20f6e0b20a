"""Gated competition with state-conditional verification, plus baselines.

The solve loop at each visited state: form candidates (generated plus
cached), gate them, score survivors, verify the top k in score order,
commit the best accepted move; on zero acceptances retry with the next
ranked batch, then backtrack one level with the failed commitment
blacklisted. Verifier calls are the budgeted resource and are accounted
exactly: the ledger's total always equals the sum of per-decision-point
query counts and never exceeds the configured budget.

Baselines (best-of-N weighted, majority vote, beam search) share the same
generator, move interface, and verifier; they differ only in selection and
allocation.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional

from . import core, scorer
from .alloc import AllocConfig, AllocState, k_of_w, score_variance, update_sigma_bar
from .core import Move, State, Trajectory, canonicalize, goal_test, serialize_move, serialize_state
from .gates import gate_check, gate_filter


class BudgetExhausted(RuntimeError):
    pass


@dataclass
class CostLedger:
    """Exact call accounting. verifier_calls always equals
    sum(per_state_queries); counters never decrease."""

    verifier_calls: int = 0
    generation_calls: int = 0
    per_state_queries: list[int] = field(default_factory=list)

    def check(self) -> None:
        assert self.verifier_calls == sum(self.per_state_queries)


INTERMEDIATE_POLICIES = ("full", "gates_only", "gates_dtype_fixed_k",
                         "verify_all", "explore")
BASELINE_POLICIES = ("best_of_n", "majority", "beam")

# policy -> (use gates, scoring mode, allocation mode)
_POLICY_SPECS = {
    "full": (True, "hybrid", "adaptive"),
    "explore": (True, "hybrid", "all"),
    "gates_only": (True, "none", "all"),
    "gates_dtype_fixed_k": (True, "dtype", "fixed"),
    "verify_all": (False, "none", "all"),
}


@dataclass(frozen=True)
class EngineConfig:
    budget_B: int = 64
    max_steps: int = 40
    retry_limit: int = 2
    backtrack: bool = True
    policy: str = "full"
    n_samples: int = 64
    beam_width: int = 4

    def __post_init__(self):
        if self.budget_B < 0:
            raise ValueError("budget_B must be >= 0")
        if self.policy not in INTERMEDIATE_POLICIES + BASELINE_POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")


@dataclass
class GeneratorModel:
    """Simulated proposer. Each candidate draws a noise class: valid moves
    carry exactly-recomputed claims; wrong-claim moves perturb one
    coefficient by +-1; malformed moves violate a structural check;
    contradicting moves claim a binding that conflicts with the context.
    Per-depth heterogeneity multipliers scale the valid probability before
    renormalizing, making deeper decisions noisier.

    Valid and wrong-claim templates are drawn with probability directed_bias
    from goal-directed candidates (variable-cancelling combinations, binding
    isolates, substitutions of known values) and uniformly otherwise,
    mimicking a proposer whose steps point somewhere while leaving plenty of
    junk for gates and verifier to reject."""

    n_gen: int = 8
    p_valid: float = 0.55
    p_wrong_claim: float = 0.25
    p_malformed: float = 0.10
    p_contradict: float = 0.10
    rng_seed: int = 0
    heterogeneity: tuple[float, ...] = (1.0,)
    directed_bias: float = 0.5
    class_counts: dict = field(default_factory=dict)

    def __post_init__(self):
        total = self.p_valid + self.p_wrong_claim + self.p_malformed + self.p_contradict
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"noise mix must sum to 1, got {total}")
        if any(not 0 <= p <= 1 for p in
               (self.p_valid, self.p_wrong_claim, self.p_malformed, self.p_contradict)):
            raise ValueError("noise probabilities must lie in [0, 1]")

    def mix_at_depth(self, depth: int) -> tuple[float, float, float, float]:
        mult = self.heterogeneity[min(depth, len(self.heterogeneity) - 1)]
        weights = (self.p_valid * mult, self.p_wrong_claim,
                   self.p_malformed, self.p_contradict)
        total = sum(weights)
        return tuple(x / total for x in weights)

    def propose(self, w: State, rng: random.Random, n: int | None = None) -> list[Move]:
        count = self.n_gen if n is None else n
        pv, pw, pm, _ = self.mix_at_depth(w.depth)
        moves = []
        for _ in range(count):
            u = rng.random()
            if u < pv:
                cls, move = "valid", self._valid(w, rng)
            elif u < pv + pw:
                cls, move = "wrong_claim", self._wrong_claim(w, rng)
            elif u < pv + pw + pm:
                cls, move = "malformed", self._malformed(w, rng)
            else:
                cls, move = "contradict", self._contradict(w, rng)
            self.class_counts[cls] = self.class_counts.get(cls, 0) + 1
            moves.append(move)
        return moves

    def _directed_templates(self, w: State) -> list[tuple[str, tuple]]:
        bound = w.context.binding_map()
        out = []
        for i, eq in enumerate(w.trace, start=1):
            free = [v for v in eq.variables() if v not in bound]
            for j, other in enumerate(w.trace, start=1):
                if i == j:
                    continue
                for v in eq.variables():
                    cj = other.coefficient(v)
                    if cj != 0:
                        c = -eq.coefficient(v) / cj
                        if c in core.ADDMUL_MULTIPLIERS:
                            out.append(("addmul", (i, j, c)))
            for v in free:
                if len(free) == 1:
                    out.append(("isolate", (i, v)))
            for v in eq.variables():
                if v in bound:
                    out.append(("subst", (i, v)))
        return out

    def _template(self, w: State, rng: random.Random) -> tuple[str, tuple]:
        if rng.random() < self.directed_bias:
            directed = self._directed_templates(w)
            if directed:
                return rng.choice(directed)
        return rng.choice(core.move_templates(w))

    def _valid(self, w: State, rng: random.Random) -> Move:
        op, args = self._template(w, rng)
        return core.exact_move(w, op, args)

    def _wrong_claim(self, w: State, rng: random.Random) -> Move:
        op, args = self._template(w, rng)
        exact = core.exact_move(w, op, args).claim
        slots = list(exact.variables()) + [None]  # None = constant
        slot = rng.choice(slots)
        for delta in (rng.choice([1, -1]), 2):
            if slot is None:
                claim = core.Equation(exact.terms, exact.constant + delta)
            else:
                coeffs = {v: c for v, c in exact.terms}
                coeffs[slot] = coeffs[slot] + delta
                claim = core.Equation.make(coeffs, exact.constant)
            claim = core.canonical_equation(claim)
            if not core.claims_match(claim, exact):
                return Move(op, args, claim)
        raise AssertionError("perturbation cannot reproduce the exact claim")

    def _malformed(self, w: State, rng: random.Random) -> Move:
        n = len(w.trace)
        idx = rng.randint(1, n)
        dummy = w.trace[0]
        flavor = rng.randrange(4)
        if flavor == 0:
            return Move("scale", (n + 1 + rng.randrange(3), Fraction(2)), dummy)
        if flavor == 1:
            return Move("scale", (idx, Fraction(0)), dummy)
        if flavor == 2:
            return Move("isolate", (idx, f"q{rng.randrange(4)}"), dummy)
        bad = core.Equation.make({f"q{rng.randrange(4)}": Fraction(1)}, Fraction(1))
        return Move("scale", (idx, Fraction(2)), bad)

    def _contradict(self, w: State, rng: random.Random) -> Move:
        bound = w.context.binding_map()
        if not bound:
            return self._wrong_claim(w, rng)
        v = rng.choice(sorted(bound))
        wrong = bound[v] + rng.choice([1, 2])
        claim = core.Equation.make({v: Fraction(1)}, wrong)
        return Move("subst", (rng.randint(1, len(w.trace)), v), claim)


@dataclass
class VerifierModel:
    """Binary step oracle: exact recomputation of op(args) compared to the
    claim, with optional label-flip noise. A pluggable labeler lets other
    domains (the DAG test domain) define acceptance. Also scores complete
    solutions as fraction-of-correct-steps plus Gaussian noise."""

    fp_rate: float = 0.0
    fn_rate: float = 0.0
    solution_score_noise: float = 0.15
    rng_seed: int = 0
    labeler: Optional[Callable[[State, Move], bool]] = None

    def exact_label(self, w: State, m: Move) -> int:
        if self.labeler is not None:
            return int(self.labeler(w, m))
        result = core.exact_result(w, m)
        return int(result is not None and core.claims_match(m.claim, result))


def verify_step(v: VerifierModel, w: State, m: Move, ledger: CostLedger,
                rng: random.Random | None = None) -> int:
    """One verifier call; increments the ledger by exactly one. The caller
    owns the state's budget field (State is immutable) and must decrement it
    alongside. Raises BudgetExhausted when no budget remains."""
    if w.remaining_budget <= 0:
        raise BudgetExhausted("no verifier budget left")
    label = v.exact_label(w, m)
    if rng is not None:
        if label == 1 and v.fn_rate > 0 and rng.random() < v.fn_rate:
            label = 0
        elif label == 0 and v.fp_rate > 0 and rng.random() < v.fp_rate:
            label = 1
    ledger.verifier_calls += 1
    return label


@dataclass
class MoveCache:
    """Verified (op, args, claim) templates keyed by trace + bindings (the
    goal is excluded so templates transfer across problems over the same
    system). Only verifier-accepted moves are ever inserted; retrieved moves
    still pass through gates and verification."""

    entries: dict[str, dict[str, Move]] = field(default_factory=dict)
    inserts: int = 0
    hits: int = 0

    def insert(self, key: str, move: Move) -> None:
        bucket = self.entries.setdefault(key, {})
        if serialize_move(move) not in bucket:
            bucket[serialize_move(move)] = move
            self.inserts += 1

    def lookup(self, key: str) -> list[Move]:
        bucket = self.entries.get(key)
        if not bucket:
            return []
        self.hits += len(bucket)
        return [bucket[s] for s in sorted(bucket)]


def cache_key(w: State) -> str:
    lines = serialize_state(w).splitlines()
    return "\n".join(lines[:-1])  # drop the goal line


def retrieve(cache: MoveCache | None, w: State) -> list[Move]:
    if cache is None:
        return []
    return cache.lookup(cache_key(w))


def propose(gen, w: State, rng: random.Random, n: int | None = None) -> list[Move]:
    return gen.propose(w, rng, n)


# ---------------------------------------------------------------------------
# the gated solve loop


def _score(params: scorer.ScorerParams, w: State, m: Move, mode: str) -> float:
    if mode == "dtype":
        return scorer.d_type(params, canonicalize(core.apply(w, m)), w.goal)
    return scorer.hybrid_score(params, w, m)


def solve_gated(problem, params: scorer.ScorerParams, engine_cfg: EngineConfig,
                alloc_cfg: AllocConfig, gen, verifier: VerifierModel,
                cache: MoveCache | None = None,
                log: list | None = None) -> tuple[Trajectory, CostLedger]:
    """Run one of the intermediate-verification policies to termination
    (goal reached, budget exhausted, or the visit cap). Deterministic given
    (problem, seeds, configs)."""
    use_gates, scoring, alloc_mode = _POLICY_SPECS[engine_cfg.policy]
    gen_rng = random.Random(f"{gen.rng_seed}:{problem.problem_id}:gen")
    ver_rng = random.Random(f"{verifier.rng_seed}:{problem.problem_id}:ver")
    ledger = CostLedger()
    alloc_state = AllocState()
    blacklist: set[tuple[str, str]] = set()
    path: list[tuple[State, Move]] = []
    w = canonicalize(replace(problem.initial, remaining_budget=engine_cfg.budget_B,
                             depth=0))
    goal = problem.goal
    visits = 0
    while visits < engine_cfg.max_steps:
        if goal_test(w, goal) or w.remaining_budget <= 0:
            break
        visits += 1
        ledger.generation_calls += 1
        skey = cache_key(w)
        seen: dict[str, Move] = {}
        candidates: list[tuple[Move, str]] = []
        for m in propose(gen, w, gen_rng) + retrieve(cache, w):
            s = serialize_move(m)
            if s in seen or (skey, s) in blacklist:
                continue
            seen[s] = m
            candidates.append((m, s))
        moves = [m for m, _ in candidates]
        reports = [gate_check(w, m) for m in moves]
        if use_gates:
            gated = [(m, s) for (m, s), r in zip(candidates, reports) if r.passed]
        else:
            gated = candidates

        scores: dict[str, float] = {}
        if scoring != "none" and gated:
            for m, s in gated:
                scores[s] = _score(params, w, m, scoring)
            order = sorted(gated, key=lambda ms: (scores[ms[1]], ms[1]))
        else:
            order = list(gated)

        k_t = None
        if order:
            if alloc_mode == "adaptive":
                sigma = score_variance([scores[s] for _, s in order]) ** 0.5
                alloc_state = update_sigma_bar(alloc_state, sigma, alloc_cfg)
                k_t = k_of_w(alloc_cfg, alloc_state, sigma)
            elif alloc_mode == "fixed":
                k_t = alloc_cfg.k_base
            else:
                k_t = len(order)

        labels: dict[str, int] = {}
        committed: Move | None = None
        idx, round_no = 0, 0
        while idx < len(order) and round_no <= engine_cfg.retry_limit:
            k = min(k_t, len(order) - idx, w.remaining_budget)
            if k <= 0:
                break
            batch = order[idx:idx + k]
            accepted: Move | None = None
            for m, s in batch:
                labels[s] = verify_step(verifier, w, m, ledger, ver_rng)
                w = replace(w, remaining_budget=w.remaining_budget - 1)
                if labels[s] == 1 and accepted is None:
                    # flip noise can accept a structurally inapplicable move
                    # in the no-gates policy; such a move cannot be committed
                    if core.exact_result(w, m) is not None:
                        accepted = m
            ledger.per_state_queries.append(len(batch))
            if accepted is not None:
                committed = accepted
                break
            idx += k
            round_no += 1

        if log is not None:
            log.append({
                "problem_id": problem.problem_id,
                "visit": visits,
                "depth": w.depth,
                "state": serialize_state(w),
                "state_id": core.state_id(w),
                "goal": core.render_goal(goal),
                "candidates": [s for _, s in candidates],
                "gate_reason": [r.reason for r in reports],
                "scores": [scores.get(s) for _, s in candidates],
                "k": k_t,
                "queried": [s in labels for _, s in candidates],
                "labels": [labels.get(s) for _, s in candidates],
                "committed": serialize_move(committed) if committed else None,
            })

        if committed is not None:
            if cache is not None:
                cache.insert(skey, committed)
            path.append((w, committed))
            w = canonicalize(core.apply(w, committed))
        elif engine_cfg.backtrack and path:
            prev, prev_move = path.pop()
            blacklist.add((cache_key(prev), serialize_move(prev_move)))
            w = replace(prev, remaining_budget=w.remaining_budget)
        # else: stay put; the next visit proposes fresh candidates

    if goal_test(w, goal):
        outcome = "solved"
    elif w.remaining_budget <= 0:
        outcome = "budget-exhausted"
    else:
        outcome = "step-limit"
    answer = w.context.binding_map().get(goal.target_variable)
    trajectory = Trajectory(tuple(path), outcome, w, answer)
    ledger.check()
    return trajectory, ledger


# ---------------------------------------------------------------------------
# unverified rollouts and solution-level scoring (baseline machinery)


def greedy_rollout(problem, gen, rng: random.Random, max_steps: int = 24,
                   ) -> tuple[Optional[Fraction], list[tuple[State, Move]], State]:
    """Take the first structurally applicable proposal at each state with no
    verification; stop once the goal variable gets bound (the rollout's
    answer, right or wrong) or after max_steps."""
    w = canonicalize(replace(problem.initial, remaining_budget=0, depth=0))
    steps: list[tuple[State, Move]] = []
    target = problem.goal.target_variable
    for _ in range(max_steps):
        if w.context.binding_map().get(target) is not None:
            break
        chosen = None
        for m in propose(gen, w, rng):
            try:
                nxt = core.apply(w, m)
            except core.StructuralError:
                continue
            chosen = (m, nxt)
            break
        if chosen is None:
            break
        steps.append((w, chosen[0]))
        w = canonicalize(chosen[1])
    return w.context.binding_map().get(target), steps, w


def solution_score(v: VerifierModel, steps: list[tuple[State, Move]],
                   rng: random.Random) -> float:
    """Solution-level verifier: fraction of steps whose claims recompute
    exactly, plus Gaussian noise, clipped to [0, 1]. One verifier call."""
    frac = (sum(v.exact_label(w, m) for w, m in steps) / len(steps)) if steps else 0.0
    if v.solution_score_noise > 0:
        frac += rng.gauss(0.0, v.solution_score_noise)
    return min(1.0, max(0.0, frac))


def solve_best_of_n(problem, N: int, v: VerifierModel, gen,
                    max_steps: int = 24) -> tuple[Optional[Fraction], CostLedger]:
    """Weighted best-of-N: score each complete rollout once, sum scores per
    distinct final answer, return the argmax answer (earliest sample on
    ties). C_ver = N."""
    if N < 1:
        raise ValueError("N must be >= 1")
    ledger = CostLedger()
    totals: dict[Fraction, float] = {}
    first_seen: dict[Fraction, int] = {}
    for i in range(N):
        roll_rng = random.Random(f"{gen.rng_seed}:{problem.problem_id}:bon:{i}")
        score_rng = random.Random(f"{v.rng_seed}:{problem.problem_id}:bonscore:{i}")
        answer, steps, _ = greedy_rollout(problem, gen, roll_rng, max_steps)
        score = solution_score(v, steps, score_rng)
        ledger.verifier_calls += 1
        ledger.per_state_queries.append(1)
        ledger.generation_calls += 1
        if answer is not None:
            totals[answer] = totals.get(answer, 0.0) + score
            first_seen.setdefault(answer, i)
    ledger.check()
    if not totals:
        return None, ledger
    best = max(totals, key=lambda a: (totals[a], -first_seen[a]))
    return best, ledger


def solve_majority(problem, N: int, gen,
                   max_steps: int = 24) -> tuple[Optional[Fraction], CostLedger]:
    """Plurality over N unverified rollout answers; zero verifier calls."""
    if N < 1:
        raise ValueError("N must be >= 1")
    ledger = CostLedger()
    counts: dict[Fraction, int] = {}
    first_seen: dict[Fraction, int] = {}
    for i in range(N):
        rng = random.Random(f"{gen.rng_seed}:{problem.problem_id}:maj:{i}")
        answer, _, _ = greedy_rollout(problem, gen, rng, max_steps)
        ledger.generation_calls += 1
        if answer is not None:
            counts[answer] = counts.get(answer, 0) + 1
            first_seen.setdefault(answer, i)
    ledger.check()
    if not counts:
        return None, ledger
    best = max(counts, key=lambda a: (counts[a], -first_seen[a]))
    return best, ledger


def solve_beam(problem, b: int, N: int, v: VerifierModel, gen,
               params: scorer.ScorerParams | None = None,
               max_rounds: int = 24) -> tuple[Optional[Fraction], CostLedger]:
    """Beam search with uniform intermediate verification: each round every
    beam state expands ceil(N/b) proposals, every applicable expansion is
    scored with one verifier call (exact step label plus Gaussian noise), and
    the top b expansions by cumulative mean score survive. Expansions whose
    goal variable is bound retire as completed solutions; the best completed
    answer wins."""
    if b < 1 or N < b:
        raise ValueError("require b >= 1 and N >= b")
    per_state = -(-N // b)  # ceil
    ledger = CostLedger()
    rng = random.Random(f"{gen.rng_seed}:{problem.problem_id}:beam")
    noise_rng = random.Random(f"{v.rng_seed}:{problem.problem_id}:beamscore")
    target = problem.goal.target_variable
    w0 = canonicalize(replace(problem.initial, remaining_budget=0, depth=0))
    beam: list[tuple[State, float, int, int]] = [(w0, 0.0, 0, 0)]  # state, score sum, steps, order
    completed: list[tuple[float, int, Fraction]] = []  # (mean score, order, answer)
    counter = 1
    for _ in range(max_rounds):
        expansions: list[tuple[State, float, int, int]] = []
        for state, score_sum, n_steps, _ in beam:
            ledger.generation_calls += 1
            queried = 0
            for m in propose(gen, state, rng, per_state):
                try:
                    child = canonicalize(core.apply(state, m))
                except core.StructuralError:
                    continue
                step = 1.0 if v.exact_label(state, m) else 0.0
                if v.solution_score_noise > 0:
                    step = min(1.0, max(0.0, step + noise_rng.gauss(0.0, v.solution_score_noise)))
                ledger.verifier_calls += 1
                queried += 1
                expansions.append((child, score_sum + step, n_steps + 1, counter))
                counter += 1
            ledger.per_state_queries.append(queried)
        if not expansions:
            break
        expansions.sort(key=lambda e: (-(e[1] / e[2]), e[3]))
        beam = []
        for child, score_sum, n_steps, order in expansions:
            answer = child.context.binding_map().get(target)
            if answer is not None:
                completed.append((score_sum / n_steps, order, answer))
            elif len(beam) < b:
                beam.append((child, score_sum, n_steps, order))
        if not beam:
            break
    ledger.check()
    if not completed:
        return None, ledger
    completed.sort(key=lambda c: (-c[0], c[1]))
    return completed[0][2], ledger
