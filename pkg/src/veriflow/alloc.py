"""State-conditional verification budgeting.

The dispersion of pre-verification scores at a state is a proxy for how
uncertain the local decision is; the allocation rule converts it into an
integer number of verifier calls, clipped to [k_min, k_max]. The running
normalizer sigma_bar is maintained per run (EMA) or held fixed for
reproducible tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class AllocConfig:
    k_min: int = 1
    k_base: int = 4
    k_max: int = 8
    beta: float = 0.5
    sigma_bar_mode: str = "ema"  # ema | fixed
    ema_decay: float = 0.9
    sigma_bar_fixed: float = 1.0

    def __post_init__(self):
        if not 1 <= self.k_min <= self.k_base <= self.k_max:
            raise ValueError("require 1 <= k_min <= k_base <= k_max")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not 0 < self.ema_decay <= 1:
            raise ValueError("ema_decay must be in (0, 1]")


@dataclass(frozen=True)
class AllocState:
    sigma_bar: float | None = None  # unset until the first positive observation
    observations: int = 0


def score_variance(scores: list[float]) -> float:
    """Population variance (divide by n) of a non-empty score list."""
    if not scores:
        raise ValueError("variance of empty score list")
    mean = sum(scores) / len(scores)
    return sum((s - mean) ** 2 for s in scores) / len(scores)


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def k_of_w(cfg: AllocConfig, st: AllocState, sigma: float) -> int:
    """Verification budget for the current state given score dispersion sigma.

    k = clip(k_min, k_max, round(k_base * (1 + beta * (sigma/sigma_bar - 1)))).
    beta = 0 always yields k_base; sigma = 0 yields the minimum-spend branch
    regardless of the normalizer.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    sigma_bar = cfg.sigma_bar_fixed if cfg.sigma_bar_mode == "fixed" else st.sigma_bar
    if sigma == 0.0:
        inner = cfg.k_base * (1.0 - cfg.beta)
    elif sigma_bar is None:
        inner = float(cfg.k_base)  # not warmed up; treat dispersion as typical
    else:
        inner = cfg.k_base * (1.0 + cfg.beta * (sigma / sigma_bar - 1.0))
    return max(cfg.k_min, min(cfg.k_max, _round_half_up(inner)))


def update_sigma_bar(st: AllocState, sigma: float, cfg: AllocConfig) -> AllocState:
    """EMA update sigma_bar <- decay*sigma_bar + (1-decay)*sigma, warm-started
    at the first positive observation. Fixed mode only counts observations."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if cfg.sigma_bar_mode == "fixed":
        return replace(st, observations=st.observations + 1)
    if st.sigma_bar is None:
        new_bar = sigma if sigma > 0 else None
    else:
        new_bar = cfg.ema_decay * st.sigma_bar + (1.0 - cfg.ema_decay) * sigma
    return AllocState(new_bar, st.observations + 1)
