"""Reward shaping for partial programs and the solved criterion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


class NoThreshold(Exception):
    """Raised when a task has no ground-truth length to derive a solve threshold from."""


@dataclass(frozen=True)
class RewardParams:
    lambda_correctness: float = 5.0
    lambda_scale: float = 100.0
    norm_floor: float = 1e-3
    error_cap: float = 1e6
    zero_tol: float = 1e-9
    exact_solve: bool = True  # solved also requires every example to match within zero_tol

    def __post_init__(self):
        for name in ("lambda_correctness", "lambda_scale", "norm_floor", "error_cap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.zero_tol >= 0:
            raise ValueError("zero_tol must be non-negative")


@dataclass(frozen=True)
class RewardContext:
    targets: np.ndarray  # (N, M)
    gt_length: Optional[int] = None

    def __post_init__(self):
        t = np.asarray(self.targets, dtype=np.float64)
        if t.ndim != 2:
            raise ValueError(f"targets must be (N, M), got shape {t.shape}")
        object.__setattr__(self, "targets", t)

    @property
    def n_examples(self) -> int:
        return self.targets.shape[0]

    @property
    def n_vars(self) -> int:
        return self.targets.shape[1]


def relative_errors(states: np.ndarray, ctx: RewardContext, params: RewardParams) -> np.ndarray:
    """Per-element capped relative error, shape ``(N, M)``."""
    s = np.asarray(states, dtype=np.float64)
    if s.shape != ctx.targets.shape:
        raise ValueError(f"state shape {s.shape} does not match targets {ctx.targets.shape}")
    o = ctx.targets
    with np.errstate(all="ignore"):
        d = np.abs(o - s) / np.maximum(np.abs(o), params.norm_floor)
    d = np.where(np.isfinite(d) & (d <= params.error_cap), d, params.error_cap)
    return np.where(d < params.zero_tol, 0.0, d)


def correctness(states: np.ndarray, ctx: RewardContext, params: RewardParams = RewardParams()) -> float:
    d = relative_errors(states, ctx, params)
    return params.lambda_correctness / d.size * float(d.sum())


def efficiency(t: int) -> int:
    """Length penalty given the program length before the action."""
    if t < 0:
        raise ValueError("program length must be non-negative")
    return t + 1


def reward(states: np.ndarray, t: int, ctx: RewardContext, params: RewardParams = RewardParams()) -> float:
    return params.lambda_scale / (correctness(states, ctx, params) + efficiency(t))


def solve_threshold(ctx: RewardContext, params: RewardParams = RewardParams()) -> float:
    if ctx.gt_length is None:
        raise NoThreshold("ground-truth length unknown; stop on budget or a quality bar instead")
    return params.lambda_scale / ctx.gt_length


def is_solved(value: float, ctx: RewardContext, params: RewardParams = RewardParams(),
              states: Optional[np.ndarray] = None) -> bool:
    """Whether ``value`` clears the ground-truth reward.

    With ``params.exact_solve`` and ``states`` given, a near miss that clears
    the threshold only through a shorter length (e.g. a one-line program with
    small but nonzero error) does not count.
    """
    if value < solve_threshold(ctx, params):
        return False
    if params.exact_solve and states is not None:
        return not relative_errors(states, ctx, params).any()
    return True
