"""Per-step reward for the controlled vehicle.

Four terms: a headway safety term, a capped speed term, a closing-speed
penalty below the critical headway, and a squared-acceleration penalty,
combined linearly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 1.0
    beta: float = 1.0
    gamma_w: float = 1.0
    delta: float = 4.0
    v_ept: float = 18.0
    h_c: float = 1.0
    # Literal reading of the closing-speed condition (ego slower than lead).
    literal_speeddiff: bool = False

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma_w", "delta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"reward weight {name} must be finite")
        if not self.v_ept > 0:
            raise ValueError("v_ept must be > 0")
        if not self.h_c > 0:
            raise ValueError("h_c must be > 0")


@dataclass(frozen=True)
class RewardBreakdown:
    headway_term: float
    speed_term: float
    speeddiff_term: float
    acc_term: float
    total: float


def reward_headway(h):
    if h <= 0.0:
        return -100.0
    if h <= 1.0:
        return -100.0 + math.sqrt(100.0 ** 2 * (1.0 - (h - 1.0) ** 2))
    return 0.0


def reward_speed(v_ego, cfg):
    return cfg.v_ept - max(0.0, cfg.v_ept - v_ego)


def reward_speeddiff(v_ego, v_lead, h, cfg):
    if cfg.literal_speeddiff:
        applies = v_ego < v_lead and h < cfg.h_c
    else:
        applies = v_ego > v_lead and h < cfg.h_c
    if not applies:
        return 0.0
    return (v_ego - v_lead) * (h - cfg.h_c)


def reward_acc(a_ego):
    return -(a_ego * a_ego)


def total_reward(state, h, cfg):
    """Weighted reward for a :class:`~stopgo.sim.StateVector` and headway ``h``."""
    rh = reward_headway(h)
    rv = reward_speed(state.v_ego, cfg)
    rsd = reward_speeddiff(state.v_ego, state.v_lead, h, cfg)
    ra = reward_acc(state.a_ego)
    total = cfg.alpha * rh + cfg.beta * rv + cfg.gamma_w * rsd + cfg.delta * ra
    return RewardBreakdown(rh, rv, rsd, ra, total)
