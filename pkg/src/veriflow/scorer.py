"""Hybrid pre-verification scoring and its trainer.

The score of a candidate move is h = (structural distance from the post-move
state to the goal) + (learned residual over embeddings of state, move, and
goal). Lower ranks higher. The residual orders candidates for verification
but never accepts or rejects anything; acceptance stays with the verifier.

Training data is state-wise candidate lists carrying verifier labels. The
residual net is a small tanh MLP trained with a logistic pairwise ranking
loss within each state, plus an optional remaining-steps regression on
solved trajectories. Backprop is written out by hand so gradients can be
checked against finite differences.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import core
from .embed import DEFAULT_DIM, DEFAULT_SEED, Embedding, distance, embed


class DegenerateDatasetError(ValueError):
    """No state in the dataset carries both a positive and a negative label."""


@dataclass(frozen=True)
class ScorerParams:
    """Projection, residual-net weights, and scale constants; immutable once
    trained. Serialization round-trips bit-exactly through JSON."""

    embed_dim: int
    proj_dim: int
    hidden: int
    distance_kind: str
    alpha: float
    hash_seed: int
    m_proj: np.ndarray  # (proj_dim, embed_dim)
    w1: np.ndarray      # (hidden, 3*embed_dim)
    b1: np.ndarray      # (hidden,)
    w2: np.ndarray      # (hidden,)
    b2: float
    created_from: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CandidateRecord:
    """One gated candidate at one state, labeled by a verifier call."""

    state_id: str
    state: str
    move: str
    goal: str
    label: int
    gate_reason: str = "ok"


@dataclass(frozen=True)
class TrajSample:
    """A committed trajectory as canonical texts, for the remaining-steps signal."""

    goal: str
    steps: tuple[tuple[str, str], ...]  # (state_text, move_text)
    solved: bool


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.1
    alpha: float = 0.1
    learning_rate: float = 0.05
    epochs: int = 60
    batch_pairs: int = 0  # 0 = full batch
    rng_seed: int = 0
    distance_kind: str = "cosine"
    embed_dim: int = DEFAULT_DIM
    proj_dim: int = 32
    hidden: int = 64
    hash_seed: int = DEFAULT_SEED
    negatives_per_positive: int = 8
    holdout_fraction: float = 0.2

    def __post_init__(self):
        if self.lam < 0 or self.alpha <= 0 or self.learning_rate <= 0:
            raise ValueError("require lam >= 0, alpha > 0, learning_rate > 0")


@dataclass(frozen=True)
class Batch:
    pairs: tuple[tuple[CandidateRecord, CandidateRecord], ...]
    trajectories: tuple[TrajSample, ...] = ()
    lam: float = 0.1
    alpha: float = 0.1


@dataclass(frozen=True)
class TrainReport:
    train_accuracy: float
    holdout_accuracy: float
    loss_curve: tuple[float, ...]
    n_train_states: int
    n_holdout_states: int
    n_pairs: int


def init_params(cfg: TrainConfig) -> ScorerParams:
    rng = np.random.default_rng(cfg.rng_seed)
    d3 = 3 * cfg.embed_dim
    return ScorerParams(
        embed_dim=cfg.embed_dim,
        proj_dim=cfg.proj_dim,
        hidden=cfg.hidden,
        distance_kind=cfg.distance_kind,
        alpha=cfg.alpha,
        hash_seed=cfg.hash_seed,
        m_proj=rng.normal(0.0, 1.0 / np.sqrt(cfg.embed_dim),
                          (cfg.proj_dim, cfg.embed_dim)),
        w1=rng.normal(0.0, 1.0 / np.sqrt(d3), (cfg.hidden, d3)),
        b1=np.zeros(cfg.hidden),
        # zero output layer: the residual starts neutral and only departs
        # from zero where the labels carry signal
        w2=np.zeros(cfg.hidden),
        b2=0.0,
    )


def zero_residual_params(cfg: TrainConfig | None = None) -> ScorerParams:
    """Params whose residual is identically zero; h reduces to the structural
    distance. Used for exploration runs and the distance-only ablation."""
    cfg = cfg or TrainConfig()
    p = init_params(cfg)
    return replace(p, w1=np.zeros_like(p.w1), b1=np.zeros_like(p.b1),
                   w2=np.zeros_like(p.w2), b2=0.0)


# ---------------------------------------------------------------------------
# inference


def _embed3(params: ScorerParams, state_text: str, move_text: str,
            goal_text: str) -> np.ndarray:
    zs = embed(state_text, params.embed_dim, params.hash_seed, "state").values
    zm = embed(move_text, params.embed_dim, params.hash_seed, "move").values
    zg = embed(goal_text, params.embed_dim, params.hash_seed, "goal").values
    return np.concatenate([zs, zm, zg])


def _forward(params: ScorerParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h1 = np.tanh(X @ params.w1.T + params.b1)
    return h1 @ params.w2 + params.b2, h1


def residual_text(params: ScorerParams, state_text: str, move_text: str,
                  goal_text: str) -> float:
    r, _ = _forward(params, _embed3(params, state_text, move_text, goal_text)[None, :])
    return float(r[0])


def residual(params: ScorerParams, w: core.State, m: core.Move,
             goal: core.GoalSpec) -> float:
    return residual_text(params, core.serialize_state(w), core.serialize_move(m),
                         core.render_goal(goal))


def d_type(params: ScorerParams, w_post: core.State, goal: core.GoalSpec) -> float:
    """Structural distance from the post-move state to the goal rendering.
    A soft prior only; never used as a gate."""
    zw = embed(core.serialize_state(w_post), params.embed_dim, params.hash_seed, "state")
    zg = embed(core.render_goal(goal), params.embed_dim, params.hash_seed, "goal")
    return distance(zw, zg, params.distance_kind, params.m_proj)


def hybrid_score(params: ScorerParams, w: core.State, m: core.Move,
                 goal: core.GoalSpec | None = None) -> float:
    """h(w, m): distance-to-goal of the applied state plus the learned
    residual. Lower ranks higher. Propagates StructuralError from apply."""
    goal = goal or w.goal
    w_post = core.canonicalize(core.apply(w, m))
    return d_type(params, w_post, goal) + residual(params, w, m, goal)


# ---------------------------------------------------------------------------
# losses


def _softplus(s: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, s)


def _sigmoid(s: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def rank_loss(params: ScorerParams,
              pairs: list[tuple[CandidateRecord, CandidateRecord]]) -> float:
    """Mean over (positive, negative) pairs of log(1 + exp(r+ - r-)).
    The sign implements the lower-ranks-higher convention."""
    if not pairs:
        raise ValueError("rank_loss over an empty pair list")
    X = np.stack([_embed3(params, rec.state, rec.move, rec.goal)
                  for pair in pairs for rec in pair])
    r, _ = _forward(params, X)
    s = r[0::2] - r[1::2]
    return float(np.mean(_softplus(s)))


def traj_loss(params: ScorerParams, trajectory: TrajSample, alpha: float) -> float:
    """Mean squared error of the residual against alpha * (remaining steps)."""
    if not trajectory.solved:
        raise ValueError("trajectory signal requires a solved trajectory")
    L = len(trajectory.steps)
    X = np.stack([_embed3(params, s, m, trajectory.goal)
                  for s, m in trajectory.steps])
    r, _ = _forward(params, X)
    targets = alpha * (L - np.arange(L))
    return float(np.mean((r - targets) ** 2))


def total_loss(params: ScorerParams, batch: Batch) -> float:
    """rank_loss + lam * traj_loss, with the trajectory term pooled over the
    steps of every solved trajectory in the batch."""
    loss = 0.0
    if batch.pairs:
        loss += rank_loss(params, list(batch.pairs))
    steps = [(s, m, len(t.steps) - i)
             for t in batch.trajectories if t.solved
             for i, (s, m) in enumerate(t.steps)]
    if steps and batch.lam > 0:
        X = np.stack([_embed3(params, s, m, t.goal)
                      for t in batch.trajectories if t.solved
                      for s, m in t.steps])
        r, _ = _forward(params, X)
        targets = batch.alpha * np.array([g for _, _, g in steps], dtype=float)
        loss += batch.lam * float(np.mean((r - targets) ** 2))
    return loss


# ---------------------------------------------------------------------------
# gradients (manual backprop; checked against central differences in tests)

PARAM_TENSORS = ("w1", "b1", "w2", "b2", "m_proj")


def _backward(params: ScorerParams, X: np.ndarray, h1: np.ndarray,
              grad_r: np.ndarray) -> dict[str, np.ndarray]:
    dw2 = h1.T @ grad_r
    db2 = float(np.sum(grad_r))
    dz = (grad_r[:, None] * params.w2[None, :]) * (1.0 - h1 ** 2)
    dw1 = dz.T @ X
    db1 = dz.sum(axis=0)
    # the training objective does not involve the distance projection
    return {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2,
            "m_proj": np.zeros_like(params.m_proj)}


def loss_and_grads(params: ScorerParams, batch: Batch) -> tuple[float, dict[str, np.ndarray]]:
    rows: list[np.ndarray] = []
    pos_idx, neg_idx = [], []
    for pos, neg in batch.pairs:
        pos_idx.append(len(rows))
        rows.append(_embed3(params, pos.state, pos.move, pos.goal))
        neg_idx.append(len(rows))
        rows.append(_embed3(params, neg.state, neg.move, neg.goal))
    traj_idx, traj_goal = [], []
    for t in batch.trajectories:
        if not t.solved:
            continue
        L = len(t.steps)
        for i, (s, m) in enumerate(t.steps):
            traj_idx.append(len(rows))
            traj_goal.append(batch.alpha * (L - i))
            rows.append(_embed3(params, s, m, t.goal))
    if not rows:
        return 0.0, {k: np.zeros_like(getattr(params, k)) if k != "b2" else 0.0
                     for k in PARAM_TENSORS}
    X = np.stack(rows)
    r, h1 = _forward(params, X)
    grad_r = np.zeros(len(rows))
    loss = 0.0
    if pos_idx:
        p = np.array(pos_idx)
        n = np.array(neg_idx)
        s = r[p] - r[n]
        loss += float(np.mean(_softplus(s)))
        g = _sigmoid(s) / len(pos_idx)
        np.add.at(grad_r, p, g)
        np.add.at(grad_r, n, -g)
    if traj_idx and batch.lam > 0:
        t = np.array(traj_idx)
        targets = np.array(traj_goal, dtype=float)
        diff = r[t] - targets
        loss += batch.lam * float(np.mean(diff ** 2))
        np.add.at(grad_r, t, batch.lam * 2.0 * diff / len(traj_idx))
    return loss, _backward(params, X, h1, grad_r)


def _apply_step(params: ScorerParams, grads: dict, lr: float) -> ScorerParams:
    return replace(
        params,
        w1=params.w1 - lr * grads["w1"],
        b1=params.b1 - lr * grads["b1"],
        w2=params.w2 - lr * grads["w2"],
        b2=params.b2 - lr * grads["b2"],
    )


# ---------------------------------------------------------------------------
# training


def _group_by_state(dataset: list[CandidateRecord]) -> dict[str, list[CandidateRecord]]:
    groups: dict[str, list[CandidateRecord]] = {}
    for rec in dataset:
        groups.setdefault(rec.state_id, []).append(rec)
    return groups


def _sample_pairs(groups: dict[str, list[CandidateRecord]], state_ids: list[str],
                  rng: np.random.Generator, max_neg: int,
                  ) -> list[tuple[CandidateRecord, CandidateRecord]]:
    pairs = []
    for sid in state_ids:
        recs = groups[sid]
        positives = [r for r in recs if r.label == 1]
        negatives = [r for r in recs if r.label == 0]
        if not positives or not negatives:
            continue
        for pos in positives:
            if len(negatives) <= max_neg:
                chosen = negatives
            else:
                idx = rng.choice(len(negatives), size=max_neg, replace=False)
                chosen = [negatives[i] for i in sorted(idx)]
            pairs.extend((pos, neg) for neg in chosen)
    return pairs


def _all_pairs(groups, state_ids):
    pairs = []
    for sid in state_ids:
        recs = groups[sid]
        positives = [r for r in recs if r.label == 1]
        negatives = [r for r in recs if r.label == 0]
        pairs.extend((p, n) for p in positives for n in negatives)
    return pairs


def _pairwise_accuracy(params: ScorerParams, pairs) -> float:
    if not pairs:
        return float("nan")
    X = np.stack([_embed3(params, rec.state, rec.move, rec.goal)
                  for pair in pairs for rec in pair])
    r, _ = _forward(params, X)
    return float(np.mean(r[0::2] < r[1::2]))


def train(dataset: list[CandidateRecord], trajectories: list[TrajSample],
          config: TrainConfig) -> tuple[ScorerParams, TrainReport]:
    """Gradient descent on the combined ranking + trajectory objective with
    seeded pair sampling. Deterministic: identical (dataset, trajectories,
    config) give bit-identical params.
    """
    groups = _group_by_state(dataset)
    mixed = sorted(sid for sid, recs in groups.items()
                   if any(r.label == 1 for r in recs)
                   and any(r.label == 0 for r in recs))
    if not mixed:
        raise DegenerateDatasetError(
            "training needs at least one state with both labels present")
    rng = np.random.default_rng(config.rng_seed)
    order = [mixed[i] for i in rng.permutation(len(mixed))]
    n_holdout = int(round(config.holdout_fraction * len(order))) if len(order) > 1 else 0
    holdout_ids = sorted(order[:n_holdout])
    train_ids = sorted(order[n_holdout:])
    solved = tuple(t for t in trajectories if t.solved)

    params = init_params(config)
    eval_pairs = _all_pairs(groups, train_ids)
    eval_batch = Batch(tuple(eval_pairs), solved, config.lam, config.alpha)
    curve = [total_loss(params, eval_batch)]
    for _ in range(config.epochs):
        pairs = _sample_pairs(groups, train_ids, rng, config.negatives_per_positive)
        if config.batch_pairs and config.batch_pairs < len(pairs):
            perm = rng.permutation(len(pairs))
            for start in range(0, len(pairs), config.batch_pairs):
                chunk = [pairs[i] for i in perm[start:start + config.batch_pairs]]
                _, grads = loss_and_grads(
                    params, Batch(tuple(chunk), solved, config.lam, config.alpha))
                params = _apply_step(params, grads, config.learning_rate)
        else:
            _, grads = loss_and_grads(
                params, Batch(tuple(pairs), solved, config.lam, config.alpha))
            params = _apply_step(params, grads, config.learning_rate)
        curve.append(total_loss(params, eval_batch))

    report = TrainReport(
        train_accuracy=_pairwise_accuracy(params, eval_pairs),
        holdout_accuracy=_pairwise_accuracy(params, _all_pairs(groups, holdout_ids)),
        loss_curve=tuple(curve),
        n_train_states=len(train_ids),
        n_holdout_states=len(holdout_ids),
        n_pairs=len(eval_pairs),
    )
    params = replace(params, created_from={
        "epochs": config.epochs, "rng_seed": config.rng_seed,
        "lam": config.lam, "alpha": config.alpha,
        "learning_rate": config.learning_rate,
        "train_accuracy": report.train_accuracy,
        "holdout_accuracy": report.holdout_accuracy,
    })
    return params, report


# ---------------------------------------------------------------------------
# persistence


def params_to_json(params: ScorerParams) -> str:
    doc = {
        "embed_dim": params.embed_dim,
        "proj_dim": params.proj_dim,
        "hidden": params.hidden,
        "distance_kind": params.distance_kind,
        "alpha": params.alpha,
        "hash_seed": params.hash_seed,
        "weights": {
            "m_proj": params.m_proj.tolist(),
            "w1": params.w1.tolist(),
            "b1": params.b1.tolist(),
            "w2": params.w2.tolist(),
            "b2": params.b2,
        },
        "created_from": params.created_from,
    }
    return json.dumps(doc, sort_keys=True)


def params_from_json(text: str) -> ScorerParams:
    doc = json.loads(text)
    w = doc["weights"]
    return ScorerParams(
        embed_dim=doc["embed_dim"], proj_dim=doc["proj_dim"], hidden=doc["hidden"],
        distance_kind=doc["distance_kind"], alpha=doc["alpha"],
        hash_seed=doc["hash_seed"],
        m_proj=np.array(w["m_proj"], dtype=float),
        w1=np.array(w["w1"], dtype=float),
        b1=np.array(w["b1"], dtype=float),
        w2=np.array(w["w2"], dtype=float),
        b2=float(w["b2"]),
        created_from=doc.get("created_from", {}),
    )


def save_params(params: ScorerParams, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(params_to_json(params))


def load_params(path: str) -> ScorerParams:
    with open(path, encoding="utf-8") as fh:
        return params_from_json(fh.read())


def write_dataset(records: list[CandidateRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "state_id": rec.state_id, "state": rec.state, "move": rec.move,
                "goal": rec.goal, "label": rec.label,
                "gate_reason": rec.gate_reason,
            }, sort_keys=True) + "\n")


def read_dataset(path: str) -> list[CandidateRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            doc = json.loads(line)
            records.append(CandidateRecord(
                doc["state_id"], doc["state"], doc["move"], doc["goal"],
                int(doc["label"]), doc.get("gate_reason", "ok")))
    return records


def write_trajectories(trajs: list[TrajSample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trajs:
            fh.write(json.dumps({
                "goal": t.goal, "solved": t.solved,
                "steps": [[s, m] for s, m in t.steps],
            }, sort_keys=True) + "\n")


def read_trajectories(path: str) -> list[TrajSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            doc = json.loads(line)
            out.append(TrajSample(doc["goal"],
                                  tuple((s, m) for s, m in doc["steps"]),
                                  bool(doc["solved"])))
    return out


def traj_sample(trajectory: core.Trajectory) -> TrajSample:
    """Convert an engine trajectory into the text form the trainer consumes."""
    steps = tuple((core.serialize_state(w), core.serialize_move(m))
                  for w, m in trajectory.steps)
    goal = core.render_goal(trajectory.final_state.goal)
    return TrajSample(goal, steps, trajectory.outcome == "solved")


# ---------------------------------------------------------------------------
# benchmark corpus for the trainer


def make_separable_dataset(seed: int = 0, n_states: int = 60,
                           n_candidates: int = 8) -> list[CandidateRecord]:
    """Synthetic candidate lists whose positives are textually separable
    (isolate moves), for trainer benchmarks and regression tests."""
    rng = random.Random(f"separable:{seed}")
    records: list[CandidateRecord] = []
    variables = ("x", "y")
    for s in range(n_states):
        coeffs = {v: Fraction(rng.choice([1, 2, 3, -2, -3])) for v in variables}
        e1 = core.canonical_equation(core.Equation.make(coeffs, Fraction(rng.randint(1, 9))))
        e2 = core.canonical_equation(core.Equation.make(
            {v: Fraction(rng.choice([1, -1, 2])) for v in variables},
            Fraction(rng.randint(-5, 5))))
        goal_var = rng.choice(variables)
        goal = core.GoalSpec(goal_var, Fraction(rng.randint(-4, 4)))
        state = core.State(0, (e1, e2), core.ConstraintContext.make(), goal)
        state_text = core.serialize_state(state)
        goal_text = core.render_goal(goal)
        sid = core.state_id(state) + f":{s}"
        n_pos = rng.randint(1, 2)
        for c in range(n_candidates):
            if c < n_pos:
                idx = rng.randint(1, 2)
                var = rng.choice(variables)
                eq = state.trace[idx - 1]
                a = eq.coefficient(var)
                claim = (core.eq_scale(eq, 1 / a) if a != 0 else eq)
                move = core.Move("isolate", (idx, var), core.canonical_equation(claim))
                label = 1
            else:
                idx = rng.randint(1, 2)
                mult = Fraction(rng.choice([-3, -2, 2, 3]))
                claim = core.canonical_equation(core.eq_scale(state.trace[idx - 1], mult))
                move = core.Move("scale", (idx, mult), claim)
                label = 0
            records.append(CandidateRecord(sid, state_text, core.serialize_move(move),
                                           goal_text, label))
    return records
