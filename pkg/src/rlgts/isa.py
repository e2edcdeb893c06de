"""Floating-point RISC-V subset: instructions, programs, interpreter and action space.

Memory states are float64 arrays whose last axis indexes the variables
``f1 .. fM``. Every interpreter entry point accepts either a single state of
shape ``(M,)`` or a stack of per-example states of shape ``(N, M)``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

MAX_REGISTERS = 32
MAX_ARITY = 4

_SIGN_BIT = np.uint64(1 << 63)
CANONICAL_NAN = np.array([0x7FF8000000000000], dtype=np.uint64).view(np.float64)[0]


class Opcode(enum.Enum):
    SQRT = 0
    ADD = 1
    SUB = 2
    MUL = 3
    DIV = 4
    SGN = 5
    SGNN = 6
    SGNX = 7
    MIN = 8
    MAX = 9
    EQ = 10
    LT = 11
    LTE = 12
    MADD = 13
    MSUB = 14
    NMADD = 15
    NMSUB = 16

    @property
    def arity(self) -> int:
        """Operand count including the destination."""
        if self is Opcode.SQRT:
            return 2
        if self.value >= Opcode.MADD.value:
            return 4
        return 3


ALL_OPCODES: tuple[Opcode, ...] = tuple(Opcode)
THREE_OPERAND_OPCODES: tuple[Opcode, ...] = tuple(op for op in Opcode if op.arity == 3)


def as_opcodes(names: Iterable[str | Opcode]) -> tuple[Opcode, ...]:
    """Normalise a collection of opcode names into grammar order, dropping duplicates."""
    ops = {n if isinstance(n, Opcode) else Opcode[n.upper()] for n in names}
    if not ops:
        raise ValueError("instruction set must be nonempty")
    return tuple(sorted(ops, key=lambda o: o.value))


class IllegalOperand(ValueError):
    pass


@dataclass(frozen=True)
class Line:
    opcode: Opcode
    operands: tuple[int, ...]  # 1-based register indices, destination first

    def __post_init__(self):
        if len(self.operands) != self.opcode.arity:
            raise IllegalOperand(
                f"{self.opcode.name} takes {self.opcode.arity} operands, got {len(self.operands)}"
            )
        for r in self.operands:
            if not 1 <= r <= MAX_REGISTERS:
                raise IllegalOperand(f"register f{r} outside f1..f{MAX_REGISTERS}")

    @property
    def dest(self) -> int:
        return self.operands[0]

    @property
    def sources(self) -> tuple[int, ...]:
        return self.operands[1:]

    def __str__(self) -> str:
        return " ".join([self.opcode.name] + [f"f{r}" for r in self.operands])

    @classmethod
    def parse(cls, text: str) -> "Line":
        parts = text.split()
        if not parts:
            raise ValueError("empty line")
        try:
            op = Opcode[parts[0]]
        except KeyError:
            raise ValueError(f"unknown opcode {parts[0]!r}") from None
        regs = []
        for tok in parts[1:]:
            if len(tok) < 2 or tok[0] != "f" or not tok[1:].isdigit():
                raise ValueError(f"bad register {tok!r}")
            regs.append(int(tok[1:]))
        return cls(op, tuple(regs))


Program = tuple[Line, ...]


def format_program(program: Sequence[Line]) -> str:
    return "\n".join(str(line) for line in program)


def parse_program(text: str) -> Program:
    return tuple(Line.parse(s) for s in text.splitlines() if s.strip())


def _flip(x: np.ndarray) -> np.ndarray:
    return (x.view(np.uint64) ^ _SIGN_BIT).view(np.float64)


def _sign_inject(a: np.ndarray, sign_src: np.ndarray) -> np.ndarray:
    bits = (a.view(np.uint64) & ~_SIGN_BIT) | (sign_src.view(np.uint64) & _SIGN_BIT)
    return bits.view(np.float64)


def _min_num(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.where(a < b, a, b)
    # -0.0 orders below +0.0
    both_zero = (a == 0) & (b == 0)
    out = np.where(both_zero, _sign_inject(np.zeros_like(a), np.where(np.signbit(a), a, b)), out)
    out = np.where(np.isnan(a), b, out)
    out = np.where(np.isnan(b), a, out)
    return out


def _max_num(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.where(a > b, a, b)
    both_zero = (a == 0) & (b == 0)
    out = np.where(both_zero, _sign_inject(np.zeros_like(a), np.where(np.signbit(a), b, a)), out)
    out = np.where(np.isnan(a), b, out)
    out = np.where(np.isnan(b), a, out)
    return out


def _compute(op: Opcode, a, b, c) -> np.ndarray:
    if op is Opcode.SQRT:
        return np.sqrt(a)
    if op is Opcode.ADD:
        return a + b
    if op is Opcode.SUB:
        return a - b
    if op is Opcode.MUL:
        return a * b
    if op is Opcode.DIV:
        return a / b
    if op is Opcode.SGN:
        return _sign_inject(a, b)
    if op is Opcode.SGNN:
        return _sign_inject(a, _flip(b))
    if op is Opcode.SGNX:
        return _sign_inject(a, (a.view(np.uint64) ^ b.view(np.uint64)).view(np.float64))
    if op is Opcode.MIN:
        return _min_num(a, b)
    if op is Opcode.MAX:
        return _max_num(a, b)
    if op is Opcode.EQ:
        return (a == b).astype(np.float64)
    if op is Opcode.LT:
        return (a < b).astype(np.float64)
    if op is Opcode.LTE:
        return (a <= b).astype(np.float64)
    # multiply-add family: product rounded before the add (not fused)
    if op is Opcode.MADD:
        return a * b + c
    if op is Opcode.MSUB:
        return a * b - c
    if op is Opcode.NMADD:
        return -(a * b) - c
    if op is Opcode.NMSUB:
        return -(a * b) + c
    raise AssertionError(op)


_BITWISE = frozenset({Opcode.SGN, Opcode.SGNN, Opcode.SGNX})


def execute_line(state: np.ndarray, line: Line) -> np.ndarray:
    """Return a new state with ``line`` applied; the input is never modified.

    Arithmetic results that are NaN are canonicalised to the positive quiet
    NaN; sign-injection instructions move raw bits and keep NaN payloads.
    """
    state = np.asarray(state, dtype=np.float64)
    m = state.shape[-1]
    for r in line.operands:
        if r > m:
            raise IllegalOperand(f"{line}: register f{r} but state has {m} variables")
    src = [state[..., r - 1] for r in line.sources]
    src += [None] * (3 - len(src))
    with np.errstate(all="ignore"):
        value = np.asarray(_compute(line.opcode, *src), dtype=np.float64)
    if line.opcode not in _BITWISE:
        value = np.where(np.isnan(value), CANONICAL_NAN, value)
    out = state.copy()
    out[..., line.dest - 1] = value
    return out


def execute_program(initial: np.ndarray, program: Iterable[Line]) -> np.ndarray:
    state = np.array(initial, dtype=np.float64)  # copy, so the empty program is still pure
    for line in program:
        state = execute_line(state, line)
    return state


class ActionSpace:
    """Every legal line for an instruction set and variable count, in a fixed order.

    Instructions follow grammar order; operands vary like an odometer with the
    destination as the slowest digit.
    """

    def __init__(self, instructions: Iterable[str | Opcode], n_vars: int):
        if not 1 <= n_vars <= MAX_REGISTERS:
            raise ValueError(f"variable count must be in [1, {MAX_REGISTERS}], got {n_vars}")
        self.instructions = as_opcodes(instructions)
        self.n_vars = n_vars
        self.actions: tuple[Line, ...] = tuple(
            Line(op, regs)
            for op in self.instructions
            for regs in itertools.product(range(1, n_vars + 1), repeat=op.arity)
        )
        self._index = {line: i for i, line in enumerate(self.actions)}
        self._instr_pos = {op: i for i, op in enumerate(self.instructions)}

    @property
    def n(self) -> int:
        return len(self.actions)

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, i: int) -> Line:
        return self.actions[i]

    def index(self, line: Line) -> int:
        try:
            return self._index[line]
        except KeyError:
            raise IllegalOperand(f"{line} is not in this action space") from None

    @property
    def line_width(self) -> int:
        """Length of one flattened line encoding."""
        return len(self.instructions) + MAX_ARITY * self.n_vars

    def encode(self, line: Line) -> tuple[np.ndarray, np.ndarray]:
        """One-hot instruction vector and a ``(MAX_ARITY, V)`` operand block.

        Operand slots past the instruction's arity stay all-zero.
        """
        if line not in self._index:
            raise IllegalOperand(f"{line} is not in this action space")
        instr = np.zeros(len(self.instructions))
        instr[self._instr_pos[line.opcode]] = 1.0
        operands = np.zeros((MAX_ARITY, self.n_vars))
        for slot, r in enumerate(line.operands):
            operands[slot, r - 1] = 1.0
        return instr, operands

    def decode(self, instr: np.ndarray, operands: np.ndarray) -> Line:
        op = self.instructions[int(np.argmax(instr))]
        regs = tuple(int(np.argmax(operands[s])) + 1 for s in range(op.arity))
        return Line(op, regs)

    @cached_property
    def encodings(self) -> np.ndarray:
        """Flattened encodings of every action, shape ``(n, line_width)``."""
        rows = []
        for line in self.actions:
            instr, ops = self.encode(line)
            rows.append(np.concatenate([instr, ops.ravel()]))
        return np.array(rows)


def enumerate_actions(instructions: Iterable[str | Opcode], n_vars: int) -> ActionSpace:
    return ActionSpace(instructions, n_vars)


def action_count(instructions: Iterable[str | Opcode], n_vars: int) -> int:
    """Closed form of ``len(enumerate_actions(...))`` as an exact integer."""
    return sum(n_vars**op.arity for op in as_opcodes(instructions))


def encode_line(line: Line, instructions, n_vars: int, k_max: int = MAX_ARITY):
    if k_max != MAX_ARITY:
        raise ValueError(f"operand slots are fixed at {MAX_ARITY}")
    return ActionSpace(instructions, n_vars).encode(line)
