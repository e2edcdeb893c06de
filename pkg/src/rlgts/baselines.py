"""Comparison methods sharing the interpreter, reward, action space and budget."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .budget import Budget, BudgetExhausted, Evaluator, SynthesisResult
from .env import EnvState, SynthesisTask, observe
from .isa import Line
from .qnet import DESK_CONFIG, NetworkConfig
from .search import make_learner


def bfs_enumerate(task: SynthesisTask, budget: Budget = Budget(), evaluator: Evaluator | None = None,
                  record_wall_time: bool = False) -> SynthesisResult:
    """Enumerate programs by length, then in action-index order within a length."""
    ev = evaluator or Evaluator(task, budget)
    actions = task.actions.actions
    stop = "exhausted"
    try:
        for length in range(1, task.max_length + 1):
            for program in itertools.product(actions, repeat=length):
                _, _, solved = ev.run(program)
                if solved:
                    break
            else:
                continue
            break
    except BudgetExhausted as e:
        stop = e.reason
    return ev.result("bfs", stop, record_wall_time=record_wall_time)


def best_first(task: SynthesisTask, budget: Budget = Budget(), evaluator: Evaluator | None = None,
               record_wall_time: bool = False) -> SynthesisResult:
    """Greedy stagewise descent: score all extensions of the prefix, keep the best one."""
    ev = evaluator or Evaluator(task, budget)
    actions = task.actions.actions
    prefix: tuple[Line, ...] = ()
    states = task.inputs
    stop = "depth"
    try:
        for _ in range(task.max_length):
            best = None
            for line in actions:
                nxt, r, solved = ev.extend(states, prefix, line)
                if solved:
                    raise StopIteration
                if best is None or r > best[0]:
                    best = (r, line, nxt)
            prefix = prefix + (best[1],)
            states = best[2]
    except StopIteration:
        stop = "solved"
    except BudgetExhausted as e:
        stop = e.reason
    return ev.result("bestfirst", stop, record_wall_time=record_wall_time)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


@dataclass
class BanditPolicy:
    """Independent categorical per decision: the program length and one per line slot."""

    length_logits: np.ndarray  # (p,)
    slot_logits: np.ndarray  # (p, n)
    learning_rate: float = 0.01
    baseline: float = 0.0
    updates: int = 0

    @classmethod
    def uniform(cls, p: int, n: int, learning_rate: float = 0.01) -> "BanditPolicy":
        return cls(np.zeros(p), np.zeros((p, n)), learning_rate)

    def sample(self, rng: np.random.Generator) -> list[int]:
        length = int(rng.choice(len(self.length_logits), p=_softmax(self.length_logits))) + 1
        probs = _softmax(self.slot_logits[:length])
        return [int(rng.choice(probs.shape[1], p=probs[t])) for t in range(length)]

    def update(self, actions: list[int], reward: float) -> None:
        """REINFORCE step on every decision that produced ``actions``."""
        adv = reward - self.baseline
        lr = self.learning_rate
        grad = -_softmax(self.length_logits)
        grad[len(actions) - 1] += 1.0
        self.length_logits += lr * adv * grad
        for t, a in enumerate(actions):
            g = -_softmax(self.slot_logits[t])
            g[a] += 1.0
            self.slot_logits[t] += lr * adv * g
        self.updates += 1
        self.baseline += (reward - self.baseline) / self.updates


def bandit_synthesize(task: SynthesisTask, budget: Budget = Budget(), rng: np.random.Generator | None = None,
                      learning_rate: float = 0.01, evaluator: Evaluator | None = None,
                      record_wall_time: bool = False) -> SynthesisResult:
    rng = rng if rng is not None else np.random.default_rng(0)
    ev = evaluator or Evaluator(task, budget)
    policy = BanditPolicy.uniform(task.max_length, task.actions.n, learning_rate)
    stop = "budget"
    try:
        while True:
            actions = policy.sample(rng)
            _, r, solved = ev.run([task.actions[a] for a in actions])
            if solved:
                stop = "solved"
                break
            policy.update(actions, r)
    except BudgetExhausted as e:
        stop = e.reason
    return ev.result("bandit", stop, record_wall_time=record_wall_time)


def metropolis_accept(delta: float, beta: float, rng: np.random.Generator) -> bool:
    """Accept a move changing the reward by ``delta`` with probability ``min(1, exp(beta*delta))``."""
    if delta >= 0:
        return True
    return bool(rng.random() < math.exp(beta * delta))


MOVES = ("opcode", "operand", "resample", "swap")


@dataclass
class McmcConfig:
    beta: float = 2.0
    move_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)  # order of MOVES


@dataclass
class McmcState:
    candidate: list[Optional[Line]]  # None is a NOP slot
    reward: float
    beta: float = 2.0

    @property
    def program(self) -> tuple[Line, ...]:
        return tuple(line for line in self.candidate if line is not None)


class _Proposer:
    def __init__(self, task: SynthesisTask, rng: np.random.Generator):
        self.task = task
        self.rng = rng
        self.ops = task.actions.instructions
        self.n = task.actions.n

    def token(self) -> Optional[Line]:
        i = int(self.rng.integers(self.n + 1))
        return None if i == self.n else self.task.actions[i]

    def line(self) -> Line:
        return self.task.actions[int(self.rng.integers(self.n))]

    def reg(self, exclude: int | None = None) -> int:
        V = self.task.n_vars
        if exclude is None or V == 1:
            return int(self.rng.integers(V)) + 1
        r = int(self.rng.integers(V - 1)) + 1
        return r + 1 if r >= exclude else r

    def propose(self, candidate: list[Optional[Line]], move: str) -> list[Optional[Line]]:
        cand = list(candidate)
        rng = self.rng
        i = int(rng.integers(len(cand)))
        if move == "swap":
            if len(cand) > 1:
                j = int(rng.integers(len(cand) - 1))
                j = j + 1 if j >= i else j
                cand[i], cand[j] = cand[j], cand[i]
            return cand
        if move == "resample":
            cand[i] = self.token()
            return cand
        old = cand[i]
        if old is None:
            cand[i] = self.line()
            return cand
        if move == "opcode":
            choices = [op for op in self.ops if op is not old.opcode] or [old.opcode]
            op = choices[int(rng.integers(len(choices)))]
            regs = list(old.operands[:op.arity])
            regs += [self.reg() for _ in range(op.arity - len(regs))]
            cand[i] = Line(op, tuple(regs))
        else:
            k = int(rng.integers(len(old.operands)))
            regs = list(old.operands)
            regs[k] = self.reg(exclude=regs[k])
            cand[i] = Line(old.opcode, tuple(regs))
        return cand


def mcmc_synthesize(task: SynthesisTask, budget: Budget = Budget(), rng: np.random.Generator | None = None,
                    config: McmcConfig = McmcConfig(), evaluator: Evaluator | None = None,
                    record_wall_time: bool = False) -> SynthesisResult:
    """Metropolis search over fixed-length candidates with NOP slots."""
    rng = rng if rng is not None else np.random.default_rng(0)
    ev = evaluator or Evaluator(task, budget)
    prop = _Proposer(task, rng)
    weights = np.asarray(config.move_weights, dtype=np.float64)
    weights = weights / weights.sum()
    stop = "budget"
    accepted = 0
    try:
        state = McmcState([prop.token() for _ in range(task.max_length)], 0.0, config.beta)
        _, state.reward, solved = ev.run(state.program)
        while not solved:
            move = MOVES[int(rng.choice(len(MOVES), p=weights))]
            cand = prop.propose(state.candidate, move)
            _, r, solved = ev.run(tuple(line for line in cand if line is not None))
            if solved or metropolis_accept(r - state.reward, config.beta, rng):
                state = McmcState(cand, r, config.beta)
                accepted += 1
        stop = "solved"
    except BudgetExhausted as e:
        stop = e.reason
    return ev.result("mcmc", stop, {"accepted": accepted}, record_wall_time=record_wall_time)


@dataclass
class QOnlyConfig:
    network: NetworkConfig = field(default_factory=lambda: DESK_CONFIG)
    samples_per_round: int = 100
    train_steps_per_round: int = 100


def qonly_synthesize(task: SynthesisTask, config: QOnlyConfig = QOnlyConfig(), budget: Budget = Budget(),
                     rng: np.random.Generator | None = None, evaluator: Evaluator | None = None,
                     record_wall_time: bool = False) -> SynthesisResult:
    """Q-learning ablation without the tree: epsilon-greedy episodes from the empty program."""
    rng = rng if rng is not None else np.random.default_rng(0)
    ev = evaluator or Evaluator(task, budget)
    learner = make_learner(task, config.network, rng)
    eps = config.network.epsilon
    counters = {"samples": 0, "train_steps": 0, "episodes": 0}
    stop = "budget"
    try:
        state = EnvState(task.inputs, ())
        obs = observe(state, task)
        while True:
            for _ in range(config.samples_per_round):
                if rng.random() < eps:
                    a = int(rng.integers(task.actions.n))
                else:
                    a = int(np.argmax(learner.q_values([obs])[0]))
                line = task.actions[a]
                states, r, solved = ev.extend(state.states, state.program, line)
                counters["samples"] += 1
                nxt = EnvState(states, state.program + (line,))
                next_obs = observe(nxt, task)
                terminal = solved or nxt.t == task.max_length
                learner.buffer.add(obs, a, r, next_obs, terminal)
                if solved:
                    raise StopIteration
                if terminal:
                    counters["episodes"] += 1
                    nxt = EnvState(task.inputs, ())
                    next_obs = observe(nxt, task)
                state, obs = nxt, next_obs
            for _ in range(config.train_steps_per_round):
                learner.train_step()
                counters["train_steps"] += 1
    except StopIteration:
        stop = "solved"
    except BudgetExhausted as e:
        stop = e.reason
    return ev.result("qonly", stop, counters, record_wall_time=record_wall_time)
