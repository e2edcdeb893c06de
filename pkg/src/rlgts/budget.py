"""Proposal accounting shared by every synthesis method.

All program evaluations go through :class:`Evaluator`, so each one increments
exactly one counter no matter which method asked for it.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .env import SynthesisTask
from .isa import Line, Program, execute_line, execute_program, format_program
from .reward import is_solved, reward

TRACE_EVERY = 100


class BudgetExhausted(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class Budget:
    max_proposals: int = 20_000
    max_memory_bytes: int = 16 * 2**30
    max_wall_seconds: float = 8 * 3600.0


@dataclass
class SynthesisResult:
    task_id: str
    method: str
    solved: bool
    proposals_used: int
    best_program: str
    best_reward: float
    reward_trace: list[float]
    stop_reason: str
    counters: dict[str, int] = field(default_factory=dict)
    wall_seconds: Optional[float] = None

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        if self.wall_seconds is None:
            del d["wall_seconds"]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SynthesisResult":
        return cls(**d)


class Evaluator:
    def __init__(self, task: SynthesisTask, budget: Budget = Budget(), audit: bool = False):
        self.task = task
        self.budget = budget
        self.proposals = 0
        self.best_reward = -np.inf
        self.best_program: Program = ()
        self.solved_program: Optional[Program] = None
        self.trace: list[float] = []
        self.audit: Optional[list[Program]] = [] if audit else None
        self._t0 = time.monotonic()

    @property
    def solved(self) -> bool:
        return self.solved_program is not None

    @property
    def elapsed(self) -> float:
        return time.monotonic() - self._t0

    def check_memory(self, nbytes: int) -> None:
        if nbytes > self.budget.max_memory_bytes:
            raise BudgetExhausted("memory")

    def _charge(self) -> None:
        if self.proposals >= self.budget.max_proposals:
            raise BudgetExhausted("budget")
        if self.elapsed > self.budget.max_wall_seconds:
            raise BudgetExhausted("time")
        self.proposals += 1

    def _record(self, program: Program, states: np.ndarray, t: int) -> tuple[float, bool]:
        task = self.task
        r = reward(states, t, task.context, task.params)
        if self.audit is not None:
            self.audit.append(program)
        if r > self.best_reward:
            self.best_reward = r
            self.best_program = program
        solved = task.gt_length is not None and is_solved(r, task.context, task.params, states)
        if solved and self.solved_program is None:
            self.solved_program = program
        if self.proposals % TRACE_EVERY == 0:
            self.trace.append(float(self.best_reward))
        return r, solved

    def extend(self, states: np.ndarray, program: Program, line: Line) -> tuple[np.ndarray, float, bool]:
        """Evaluate ``program + [line]`` given the cached states after ``program``."""
        self._charge()
        nxt = execute_line(states, line)
        r, solved = self._record(program + (line,), nxt, len(program))
        return nxt, r, solved

    def run(self, program: Sequence[Line]) -> tuple[np.ndarray, float, bool]:
        """Evaluate a whole program from the task inputs.

        An empty program is scored with the same length penalty as a
        one-line program.
        """
        self._charge()
        program = tuple(program)
        final = execute_program(self.task.inputs, program)
        r, solved = self._record(program, final, max(len(program) - 1, 0))
        return final, r, solved

    def result(self, method: str, stop_reason: str, counters: dict[str, int] | None = None,
               record_wall_time: bool = False) -> SynthesisResult:
        program = self.solved_program if self.solved else self.best_program
        return SynthesisResult(
            task_id=self.task.task_id,
            method=method,
            solved=self.solved,
            proposals_used=self.proposals,
            best_program=format_program(program),
            best_reward=float(self.best_reward) if np.isfinite(self.best_reward) else 0.0,
            reward_trace=list(self.trace),
            stop_reason="solved" if self.solved else stop_reason,
            counters=dict(counters or {}),
            wall_seconds=round(self.elapsed, 3) if record_wall_time else None,
        )
