"""Line-oriented `key = value` configuration with per-module namespaces.

The VERIFLOW_SEED environment variable, when set, overrides every seed key
so CI runs are pinned regardless of the config file.
"""

from __future__ import annotations

import os

from .alloc import AllocConfig
from .engine import EngineConfig, GeneratorModel, VerifierModel
from .scorer import TrainConfig

DEFAULTS: dict[str, object] = {
    "embed.dim": 256,
    "embed.seed": 1729,
    "embed.distance": "cosine",
    "train.lambda": 0.1,
    "train.alpha": 0.1,
    "train.lr": 0.05,
    "train.epochs": 60,
    "train.seed": 0,
    "train.batch_pairs": 0,
    "train.hidden": 64,
    "train.proj_dim": 32,
    "alloc.k_min": 1,
    "alloc.k_base": 4,
    "alloc.k_max": 8,
    "alloc.beta": 0.5,
    "alloc.sigma_bar": "ema",  # "ema" or a fixed numeric value
    "alloc.ema_decay": 0.9,
    "engine.budget": 64,
    "engine.max_steps": 40,
    "engine.retry_limit": 2,
    "engine.backtrack": True,
    "engine.policy": "full",
    "engine.n_samples": 64,
    "engine.beam_width": 4,
    "gen.n_gen": 8,
    "gen.p_valid": 0.55,
    "gen.p_wrong_claim": 0.25,
    "gen.p_malformed": 0.10,
    "gen.p_contradict": 0.10,
    "gen.seed": 0,
    "gen.heterogeneity": "1.0",
    "verifier.fp_rate": 0.0,
    "verifier.fn_rate": 0.0,
    "verifier.solution_score_noise": 0.15,
    "verifier.seed": 0,
}

SEED_KEYS = ("train.seed", "gen.seed", "verifier.seed", "embed.seed")


def _coerce(text: str):
    text = text.strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_config(text: str) -> dict[str, object]:
    cfg = dict(DEFAULTS)
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ValueError(f"config line {n}: unknown key {key!r}")
        cfg[key] = _coerce(value)
    return cfg


def load_config(path: str | None) -> dict[str, object]:
    if path is None:
        cfg = dict(DEFAULTS)
    else:
        with open(path, encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    override = os.environ.get("VERIFLOW_SEED")
    if override is not None:
        for key in SEED_KEYS:
            cfg[key] = int(override)
    return cfg


def alloc_config(cfg: dict) -> AllocConfig:
    sigma_bar = cfg["alloc.sigma_bar"]
    fixed = isinstance(sigma_bar, (int, float))
    return AllocConfig(
        k_min=cfg["alloc.k_min"], k_base=cfg["alloc.k_base"],
        k_max=cfg["alloc.k_max"], beta=cfg["alloc.beta"],
        sigma_bar_mode="fixed" if fixed else "ema",
        ema_decay=cfg["alloc.ema_decay"],
        sigma_bar_fixed=float(sigma_bar) if fixed else 1.0,
    )


def engine_config(cfg: dict, **overrides) -> EngineConfig:
    base = dict(
        budget_B=cfg["engine.budget"], max_steps=cfg["engine.max_steps"],
        retry_limit=cfg["engine.retry_limit"], backtrack=cfg["engine.backtrack"],
        policy=cfg["engine.policy"], n_samples=cfg["engine.n_samples"],
        beam_width=cfg["engine.beam_width"],
    )
    base.update(overrides)
    return EngineConfig(**base)


def generator(cfg: dict) -> GeneratorModel:
    heterogeneity = tuple(float(x) for x in str(cfg["gen.heterogeneity"]).split(","))
    return GeneratorModel(
        n_gen=cfg["gen.n_gen"], p_valid=cfg["gen.p_valid"],
        p_wrong_claim=cfg["gen.p_wrong_claim"],
        p_malformed=cfg["gen.p_malformed"],
        p_contradict=cfg["gen.p_contradict"],
        rng_seed=cfg["gen.seed"], heterogeneity=heterogeneity,
    )


def verifier(cfg: dict) -> VerifierModel:
    return VerifierModel(
        fp_rate=cfg["verifier.fp_rate"], fn_rate=cfg["verifier.fn_rate"],
        solution_score_noise=cfg["verifier.solution_score_noise"],
        rng_seed=cfg["verifier.seed"],
    )


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        lam=cfg["train.lambda"], alpha=cfg["train.alpha"],
        learning_rate=cfg["train.lr"], epochs=cfg["train.epochs"],
        batch_pairs=cfg["train.batch_pairs"], rng_seed=cfg["train.seed"],
        distance_kind=cfg["embed.distance"], embed_dim=cfg["embed.dim"],
        proj_dim=cfg["train.proj_dim"], hidden=cfg["train.hidden"],
        hash_seed=cfg["embed.seed"],
    )
