"""Synthesis as a Markov decision process over partial programs."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Optional

import numpy as np

from .isa import ActionSpace, Line, Program, as_opcodes, execute_line, execute_program, format_program, parse_program
from .reward import RewardContext, RewardParams, is_solved, reward


class IllegalStep(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SynthesisTask:
    inputs: np.ndarray  # (N, V)
    outputs: np.ndarray  # (N, V)
    instructions: tuple[str, ...]
    n_vars: int
    max_length: int  # depth cap p
    gt_length: Optional[int] = None
    gt_program: Optional[Program] = None
    params: RewardParams = field(default_factory=RewardParams)
    task_id: str = "task"

    def __post_init__(self):
        inputs = np.array(self.inputs, dtype=np.float64)
        outputs = np.array(self.outputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape != outputs.shape:
            raise ValueError(f"inputs {inputs.shape} and outputs {outputs.shape} must both be (N, V)")
        if inputs.shape[0] < 1 or inputs.shape[1] != self.n_vars:
            raise ValueError(f"examples must be (N>=1, {self.n_vars})")
        if self.max_length < 1:
            raise ValueError("depth cap must be at least 1")
        inputs.flags.writeable = False
        outputs.flags.writeable = False
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "instructions", tuple(op.name for op in as_opcodes(self.instructions)))
        if self.gt_program is not None:
            object.__setattr__(self, "gt_program", tuple(self.gt_program))
            if self.gt_length is None:
                object.__setattr__(self, "gt_length", len(self.gt_program))

    @property
    def n_examples(self) -> int:
        return self.inputs.shape[0]

    @cached_property
    def actions(self) -> ActionSpace:
        return ActionSpace(self.instructions, self.n_vars)

    @cached_property
    def context(self) -> RewardContext:
        return RewardContext(self.outputs, self.gt_length)

    def with_depth_cap(self, p: int) -> "SynthesisTask":
        return SynthesisTask(self.inputs, self.outputs, self.instructions, self.n_vars, p,
                             self.gt_length, self.gt_program, self.params, self.task_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.task_id,
            "instructions": list(self.instructions),
            "V": self.n_vars,
            "p": self.max_length,
            "T_gt": self.gt_length,
            "examples": [
                {"input": [float(x) for x in i], "output": [float(x) for x in o]}
                for i, o in zip(self.inputs, self.outputs)
            ],
            "gt_program": None if self.gt_program is None else format_program(self.gt_program),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any], params: RewardParams | None = None) -> "SynthesisTask":
        gt = d.get("gt_program")
        return cls(
            inputs=[e["input"] for e in d["examples"]],
            outputs=[e["output"] for e in d["examples"]],
            instructions=tuple(d["instructions"]),
            n_vars=int(d["V"]),
            max_length=int(d["p"]),
            gt_length=d.get("T_gt"),
            gt_program=None if gt is None else parse_program(gt),
            params=params or RewardParams(),
            task_id=str(d.get("id", "task")),
        )


@dataclass(frozen=True, eq=False)
class EnvState:
    states: np.ndarray  # (N, V) current values per example
    program: Program = ()

    @property
    def t(self) -> int:
        return len(self.program)


@dataclass(frozen=True, eq=False)
class Observation:
    numeric: np.ndarray  # (N, V, 3): transformed current, transformed target, non-finite flag
    program: np.ndarray  # (p, line_width), zero rows past the program length
    length: int


def signed_log(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.log1p(np.abs(x))


def reset(task: SynthesisTask) -> EnvState:
    return EnvState(task.inputs.copy(), ())


def step(state: EnvState, action: int, task: SynthesisTask) -> tuple[EnvState, float, bool]:
    """Apply action ``action`` to every example.

    The episode ends when the reward clears the solve threshold or the
    program reaches the depth cap.
    """
    if state.t >= task.max_length:
        raise IllegalStep(f"program already at depth cap {task.max_length}")
    if not 0 <= action < task.actions.n:
        raise IllegalStep(f"action {action} outside [0, {task.actions.n})")
    line = task.actions[action]
    nxt = EnvState(execute_line(state.states, line), state.program + (line,))
    r = reward(nxt.states, state.t, task.context, task.params)
    terminal = nxt.t == task.max_length
    if task.gt_length is not None:
        terminal = terminal or is_solved(r, task.context, task.params, nxt.states)
    return nxt, r, terminal


def observe(state: EnvState, task: SynthesisTask) -> Observation:
    cur = state.states
    finite = np.isfinite(cur)
    numeric = np.stack(
        [np.where(finite, signed_log(np.where(finite, cur, 0.0)), 0.0),
         signed_log(task.outputs),
         (~finite).astype(np.float64)],
        axis=-1,
    )
    space = task.actions
    prog = np.zeros((task.max_length, space.line_width))
    for i, line in enumerate(state.program):
        prog[i] = space.encodings[space.index(line)]
    return Observation(numeric, prog, state.t)


def replay(task: SynthesisTask, program: Program) -> EnvState:
    return EnvState(execute_program(task.inputs, program), tuple(program))
