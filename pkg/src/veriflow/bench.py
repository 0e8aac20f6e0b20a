"""Experiment drivers: exploration data collection, budget sweeps over
matched generation budgets, the four-way ablation, and report emission.

All drivers are deterministic per (spec, seeds): every policy in a sweep
cell consumes the same problem corpus and the same per-problem generator
seeds, results are sorted before writing, and re-running produces
byte-identical files.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, replace

from . import engine, scorer
from .alloc import AllocConfig
from .engine import CostLedger, EngineConfig, GeneratorModel, VerifierModel

DEFAULT_BUDGETS = (2, 4, 8, 16, 32, 64, 128)
NORMALIZATION_NOTE = (
    "# budget normalization: one complete unverified rollout = 1 generation"
    " unit; gated policies receive a verifier-call budget B = N at sweep"
    " point N, baselines receive N samples, so the x-axis is shared"
)


@dataclass(frozen=True)
class SweepSpec:
    budgets: tuple[int, ...] = DEFAULT_BUDGETS
    policies: tuple[str, ...] = ("full", "best_of_n", "majority", "beam")
    seeds: tuple[int, ...] = (0,)
    beam_width: int = 4

    def __post_init__(self):
        if not self.budgets or list(self.budgets) != sorted(self.budgets) \
                or min(self.budgets) < 1:
            raise ValueError("budgets must be positive and sorted")
        if not self.seeds:
            raise ValueError("at least one seed required")


@dataclass(frozen=True)
class ResultRow:
    policy: str
    budget: int
    seed: int
    accuracy: float
    mean_verifier_calls: float
    mean_generation_calls: float
    bin_accuracy: dict = field(default_factory=dict, hash=False)


def _seeded(model, seed):
    kwargs = {"rng_seed": f"{model.rng_seed}:{seed}"}
    if isinstance(model, GeneratorModel):
        kwargs["class_counts"] = {}
    return replace(model, **kwargs)


def _evaluate_problem(problem, policy, budget, params, gen, verifier,
                      alloc_cfg, engine_cfg) -> tuple[bool, CostLedger]:
    if policy in engine.INTERMEDIATE_POLICIES:
        cfg = replace(engine_cfg, policy=policy, budget_B=budget)
        traj, ledger = engine.solve_gated(problem, params, cfg, alloc_cfg,
                                          gen, verifier)
        answer = traj.final_answer if traj.outcome == "solved" else None
    elif policy == "best_of_n":
        answer, ledger = engine.solve_best_of_n(problem, budget, verifier, gen)
    elif policy == "majority":
        answer, ledger = engine.solve_majority(problem, budget, gen)
    elif policy == "beam":
        answer, ledger = engine.solve_beam(problem, engine_cfg.beam_width,
                                           budget, verifier, gen, params)
    else:
        raise ValueError(f"unknown policy {policy!r}")
    correct = answer is not None and answer == problem.goal.target_value
    return correct, ledger


def _cell(problems, policy, budget, seed, params, gen, verifier, alloc_cfg,
          engine_cfg) -> ResultRow:
    gen_s = _seeded(gen, seed)
    ver_s = _seeded(verifier, seed)
    correct_flags, ver_calls, gen_calls = [], [], []
    by_bin: dict[int, list[bool]] = {}
    for problem in problems:
        correct, ledger = _evaluate_problem(problem, policy, budget, params,
                                            gen_s, ver_s, alloc_cfg, engine_cfg)
        ledger.check()
        correct_flags.append(correct)
        ver_calls.append(ledger.verifier_calls)
        gen_calls.append(ledger.generation_calls)
        by_bin.setdefault(problem.difficulty_bin, []).append(correct)
    return ResultRow(
        policy=policy, budget=budget, seed=seed,
        accuracy=sum(correct_flags) / len(correct_flags),
        mean_verifier_calls=sum(ver_calls) / len(ver_calls),
        mean_generation_calls=sum(gen_calls) / len(gen_calls),
        bin_accuracy={b: sum(v) / len(v) for b, v in sorted(by_bin.items())},
    )


def run_sweep(spec: SweepSpec, problems, params, gen: GeneratorModel,
              verifier: VerifierModel, alloc_cfg: AllocConfig | None = None,
              engine_cfg: EngineConfig | None = None) -> list[ResultRow]:
    if not problems:
        raise ValueError("empty corpus")
    alloc_cfg = alloc_cfg or AllocConfig()
    engine_cfg = engine_cfg or EngineConfig(beam_width=spec.beam_width)
    rows = []
    for policy in spec.policies:
        for budget in spec.budgets:
            for seed in spec.seeds:
                rows.append(_cell(problems, policy, budget, seed, params,
                                  gen, verifier, alloc_cfg, engine_cfg))
    rows.sort(key=lambda r: (r.policy, r.budget, r.seed))
    return rows


ABLATION_ORDER = ("verify_all", "gates_only", "gates_dtype_fixed_k", "full")


def run_ablation(problems, params, gen: GeneratorModel, verifier: VerifierModel,
                 seeds: tuple[int, ...] = (0,), budget: int = 32,
                 alloc_cfg: AllocConfig | None = None,
                 engine_cfg: EngineConfig | None = None) -> list[ResultRow]:
    """The four configurations under shared seeds: uniform verification with
    no gates, gates with full verification of survivors, gates plus
    distance-only ranking at fixed k, and the full adaptive policy."""
    alloc_cfg = alloc_cfg or AllocConfig()
    engine_cfg = engine_cfg or EngineConfig()
    rows = []
    for policy in ABLATION_ORDER:
        for seed in seeds:
            rows.append(_cell(problems, policy, budget, seed, params, gen,
                              verifier, alloc_cfg, engine_cfg))
    rows.sort(key=lambda r: (ABLATION_ORDER.index(r.policy), r.seed))
    return rows


# ---------------------------------------------------------------------------
# exploration data collection


def run_explore(problems, engine_cfg: EngineConfig, gen: GeneratorModel,
                verifier: VerifierModel, params=None,
                alloc_cfg: AllocConfig | None = None, cache=None,
                ) -> tuple[list[scorer.CandidateRecord], list[scorer.TrajSample], list[dict]]:
    """Run the gated loop with a zero-residual scorer, verifying every gated
    survivor so each one gets a verifier label, and log everything: the
    training dataset (one record per queried candidate), the solved
    trajectories, and the raw per-state exploration log."""
    params = params or scorer.zero_residual_params()
    alloc_cfg = alloc_cfg or AllocConfig()
    cfg = replace(engine_cfg, policy="explore")
    records: list[scorer.CandidateRecord] = []
    trajectories: list[scorer.TrajSample] = []
    logs: list[dict] = []
    for problem in problems:
        log: list[dict] = []
        traj, _ = engine.solve_gated(problem, params, cfg, alloc_cfg, gen,
                                     verifier, cache=cache, log=log)
        for line in log:
            for i, move_text in enumerate(line["candidates"]):
                if line["queried"][i]:
                    records.append(scorer.CandidateRecord(
                        state_id=line["state_id"], state=line["state"],
                        move=move_text, goal=line["goal"],
                        label=line["labels"][i],
                        gate_reason=line["gate_reason"][i]))
        if traj.outcome == "solved" and len(traj) > 0:
            trajectories.append(scorer.traj_sample(traj))
        logs.extend(log)
    return records, trajectories, logs


def write_log(logs: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in logs:
            fh.write(json.dumps(line, sort_keys=True) + "\n")


def run_summary(problem, trajectory, ledger: CostLedger, seed) -> dict:
    answer = trajectory.final_answer
    return {
        "problem_id": problem.problem_id,
        "outcome": trajectory.outcome,
        "answer": None if answer is None else str(answer),
        "verifier_calls": ledger.verifier_calls,
        "generation_calls": ledger.generation_calls,
        "steps": len(trajectory),
        "seed": seed,
    }


# ---------------------------------------------------------------------------
# report emission

_BIN_COLUMNS = (1, 2, 3, 4, 5)
_HEADER = ("policy", "budget", "seed", "accuracy", "mean_verifier_calls",
           "mean_generation_calls") + tuple(f"acc_bin{b}" for b in _BIN_COLUMNS)


def rows_to_csv(rows: list[ResultRow]) -> str:
    out = io.StringIO()
    out.write(NORMALIZATION_NOTE + "\n")
    out.write(",".join(_HEADER) + "\n")
    for r in rows:
        cells = [r.policy, str(r.budget), str(r.seed), f"{r.accuracy:.6f}",
                 f"{r.mean_verifier_calls:.6f}", f"{r.mean_generation_calls:.6f}"]
        for b in _BIN_COLUMNS:
            acc = r.bin_accuracy.get(b)
            cells.append("" if acc is None else f"{acc:.6f}")
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def csv_to_rows(text: str) -> list[ResultRow]:
    rows = []
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    for line in lines[1:]:
        cells = line.split(",")
        bins = {b: float(cells[6 + i]) for i, b in enumerate(_BIN_COLUMNS)
                if 6 + i < len(cells) and cells[6 + i]}
        rows.append(ResultRow(cells[0], int(cells[1]), int(cells[2]),
                              float(cells[3]), float(cells[4]), float(cells[5]),
                              bins))
    return rows


def rows_to_table(rows: list[ResultRow]) -> str:
    header = ("policy", "budget", "seed", "accuracy", "ver_calls", "gen_calls")
    body = [(r.policy, str(r.budget), str(r.seed), f"{r.accuracy:.3f}",
             f"{r.mean_verifier_calls:.1f}", f"{r.mean_generation_calls:.1f}")
            for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h)
              for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for b in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(b, widths)))
    return "\n".join(lines) + "\n"
