"""Synthetic benchmark suites of random straight-line programs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .baselines import best_first
from .budget import Budget
from .env import SynthesisTask
from .isa import ALL_OPCODES, THREE_OPERAND_OPCODES, ActionSpace, Line, Program, as_opcodes, execute_program
from .reward import RewardContext, RewardParams, relative_errors

SUITE_FORMAT_VERSION = 1


class GenerationInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class BenchmarkSpec:
    length: int
    max_length: int
    n_vars: int = 4
    n_examples: int = 5
    count: int = 100
    seed: int = 0
    instructions: Optional[tuple[str, ...]] = None
    n_instructions: int = 2  # used when ``instructions`` is None: a fresh random subset per task
    keep: str = "all"  # "all", "nonconvex" or "convex"
    max_rejections: int = 10_000

    def __post_init__(self):
        if not 1 <= self.length <= self.max_length:
            raise ValueError("need 1 <= length <= max_length")
        if self.count < 1:
            raise ValueError("count must be at least 1")
        if self.keep not in ("all", "nonconvex", "convex"):
            raise ValueError(f"unknown keep filter {self.keep!r}")
        if self.instructions is not None:
            object.__setattr__(self, "instructions", tuple(op.name for op in as_opcodes(self.instructions)))
        elif not 1 <= self.n_instructions <= len(ALL_OPCODES):
            raise ValueError("n_instructions must be in [1, 17]")


@dataclass
class GeneratedBenchmark:
    spec: BenchmarkSpec
    tasks: list[SynthesisTask] = field(default_factory=list)
    convex: list[bool] = field(default_factory=list)

    @property
    def nonconvex(self) -> list[SynthesisTask]:
        return [t for t, c in zip(self.tasks, self.convex) if not c]


def generate_inputs(n_vars: int, n_examples: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform magnitudes in [1, 10] with independent random signs, shape ``(N, V)``."""
    if n_vars < 1:
        raise ValueError("need at least one variable")
    mag = rng.uniform(1.0, 10.0, size=(n_examples, n_vars))
    sign = np.where(rng.random((n_examples, n_vars)) < 0.5, -1.0, 1.0)
    return mag * sign


def pick_instructions(spec: BenchmarkSpec, rng: np.random.Generator) -> tuple[str, ...]:
    if spec.instructions is not None:
        return spec.instructions
    k = spec.n_instructions
    pool = THREE_OPERAND_OPCODES if k <= len(THREE_OPERAND_OPCODES) else ALL_OPCODES
    chosen = rng.choice(len(pool), size=k, replace=False)
    return tuple(op.name for op in as_opcodes(pool[i] for i in chosen))


def random_line(ops: Sequence, n_vars: int, rng: np.random.Generator) -> Line:
    op = ops[int(rng.integers(len(ops)))]
    return Line(op, tuple(int(r) + 1 for r in rng.integers(n_vars, size=op.arity)))


def rejection_reason(program: Program, inputs: np.ndarray, outputs: np.ndarray,
                     params: RewardParams = RewardParams()) -> Optional[str]:
    """Why a generated program is easily reducible or unusable, or ``None`` if it is kept."""
    if not np.all(np.isfinite(outputs)):
        return "nonfinite"
    ctx = RewardContext(outputs)
    if not relative_errors(inputs, ctx, params).any():
        return "identity"
    for i in range(len(program)):
        shorter = program[:i] + program[i + 1:]
        if not relative_errors(execute_program(inputs, shorter), ctx, params).any():
            return "deletable"
    return None


def generate_program(length: int, instructions: Sequence[str], n_vars: int, n_examples: int,
                     rng: np.random.Generator, params: RewardParams = RewardParams(),
                     max_rejections: int = 10_000) -> tuple[Program, np.ndarray, np.ndarray]:
    """Draw random programs until one passes every reducibility check.

    Returns ``(program, inputs, outputs)``.
    """
    ops = as_opcodes(instructions)
    for _ in range(max_rejections):
        inputs = generate_inputs(n_vars, n_examples, rng)
        program = tuple(random_line(ops, n_vars, rng) for _ in range(length))
        outputs = execute_program(inputs, program)
        if rejection_reason(program, inputs, outputs, params) is None:
            return program, inputs, outputs
    raise GenerationInfeasible(
        f"{max_rejections} consecutive rejections for length {length}, {list(instructions)}, V={n_vars}"
    )


def is_convex(task: SynthesisTask) -> bool:
    """True iff greedy stagewise descent reaches a solving program."""
    budget = Budget(max_proposals=task.max_length * task.actions.n)
    return best_first(task, budget).solved


def build_suite(spec: BenchmarkSpec, params: RewardParams = RewardParams()) -> GeneratedBenchmark:
    bench = GeneratedBenchmark(spec)
    index = 0
    while len(bench.tasks) < spec.count:
        if index - len(bench.tasks) >= spec.max_rejections:
            raise GenerationInfeasible(f"{spec.max_rejections} tasks filtered out by keep={spec.keep!r}")
        rng = np.random.default_rng([spec.seed, index])
        instructions = pick_instructions(spec, rng)
        program, inputs, outputs = generate_program(
            spec.length, instructions, spec.n_vars, spec.n_examples, rng, params, spec.max_rejections
        )
        task = SynthesisTask(
            inputs, outputs, instructions, spec.n_vars, spec.max_length,
            gt_program=program, params=params,
            task_id=f"L{spec.length}-I{len(instructions)}-V{spec.n_vars}-s{spec.seed}-{index:04d}",
        )
        index += 1
        convex = is_convex(task)
        if spec.keep == "nonconvex" and convex or spec.keep == "convex" and not convex:
            continue
        bench.tasks.append(task)
        bench.convex.append(convex)
    return bench


def suite_to_json(bench: GeneratedBenchmark) -> str:
    spec = asdict(bench.spec)
    if spec["instructions"] is not None:
        spec["instructions"] = list(spec["instructions"])
    doc = {
        "format_version": SUITE_FORMAT_VERSION,
        "seed": bench.spec.seed,
        "spec": spec,
        "tasks": [dict(t.to_dict(), convex=c) for t, c in zip(bench.tasks, bench.convex)],
    }
    return json.dumps(doc, indent=1) + "\n"


def save_suite(bench: GeneratedBenchmark, path: str | Path) -> None:
    Path(path).write_text(suite_to_json(bench))


def load_suite(path: str | Path, params: RewardParams = RewardParams()) -> GeneratedBenchmark:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != SUITE_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported suite format {doc.get('format_version')!r}")
    spec = dict(doc["spec"])
    if spec.get("instructions") is not None:
        spec["instructions"] = tuple(spec["instructions"])
    bench = GeneratedBenchmark(BenchmarkSpec(**spec))
    for rec in doc["tasks"]:
        bench.tasks.append(SynthesisTask.from_dict(rec, params))
        bench.convex.append(bool(rec.get("convex", False)))
    return bench
