"""veriflow: budget-aware reasoning search with feasibility gating, hybrid
pre-verification scoring, and state-conditional allocation of verifier calls,
over deterministic synthetic domains with exact oracles."""

from .alloc import AllocConfig, AllocState, k_of_w, score_variance, update_sigma_bar
from .core import (
    ConstraintContext,
    Equation,
    GoalSpec,
    Move,
    ParseError,
    State,
    StructuralError,
    Trajectory,
    apply,
    canonicalize,
    exact_result,
    goal_test,
    parse_move,
    serialize_move,
    serialize_state,
)
from .embed import Embedding, distance, embed
from .engine import (
    BudgetExhausted,
    CostLedger,
    EngineConfig,
    GeneratorModel,
    MoveCache,
    VerifierModel,
    solve_beam,
    solve_best_of_n,
    solve_gated,
    solve_majority,
    verify_step,
)
from .gates import ConstraintDelta, GateReport, compute_delta, extract_ctx, gate_ctx, gate_filter, gate_struct
from .scorer import (
    CandidateRecord,
    ScorerParams,
    TrainConfig,
    d_type,
    hybrid_score,
    rank_loss,
    residual,
    total_loss,
    train,
    traj_loss,
)
from .domain import DagDomain, Problem, bfs_min_steps, bin_difficulty, gen_problem

__version__ = "0.1.0"
