import math

import numpy as np
import pytest

from helpers import task_from_program
from rlgts.baselines import (
    BanditPolicy, McmcConfig, _Proposer, bandit_synthesize, best_first, bfs_enumerate, metropolis_accept,
    mcmc_synthesize, qonly_synthesize,
)
from rlgts.benchgen import BenchmarkSpec, build_suite
from rlgts.budget import Budget, Evaluator
from rlgts.env import SynthesisTask
from rlgts.isa import execute_program, parse_program
from rlgts.reward import is_solved, relative_errors, reward, solve_threshold


def first_solving_index(task):
    for i, line in enumerate(task.actions.actions):
        if not relative_errors(execute_program(task.inputs, [line]), task.context, task.params).any():
            return i
    raise AssertionError("no one-line solution")


def test_bfs_first_action():
    task = task_from_program("ADD f1 f1 f1", ["ADD", "MUL"])
    assert first_solving_index(task) == 0
    assert bfs_enumerate(task).proposals_used == 1


def test_bfs_last_action():
    task = task_from_program("MUL f4 f4 f4", ["ADD", "MUL"])
    assert first_solving_index(task) == 127
    result = bfs_enumerate(task)
    assert result.solved and result.proposals_used == 128


@pytest.mark.parametrize("seed", range(4))
def test_bfs_position_oracle(seed):
    task = task_from_program("MUL f2 f1 f3", ["ADD", "SUB", "MUL"], seed=seed)
    assert bfs_enumerate(task).proposals_used == first_solving_index(task) + 1


def test_bfs_canonical_order_without_repeats():
    rng = np.random.default_rng(0)
    task = SynthesisTask(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)) + 50, ("ADD", "SQRT"), 2, 3, gt_length=1)
    n = task.actions.n
    ev = Evaluator(task, Budget(), audit=True)
    result = bfs_enumerate(task, evaluator=ev)
    assert result.stop_reason == "exhausted"
    expected = [(a,) for a in task.actions.actions]
    expected += [(a, b) for a in task.actions.actions for b in task.actions.actions]
    assert ev.audit[:n + n * n] == expected
    assert len(ev.audit) == len(set(ev.audit)) == n + n**2 + n**3


def test_best_first_convex_task():
    task = task_from_program("MUL f1 f2 f3", ["ADD", "MUL"], max_length=3)
    result = best_first(task)
    assert result.solved and result.proposals_used <= task.max_length * task.actions.n
    final = execute_program(task.inputs, parse_program(result.best_program))
    assert reward(final, 0, task.context) >= solve_threshold(task.context)


def test_best_first_can_fail_with_budget_left():
    bench = build_suite(BenchmarkSpec(length=3, max_length=3, count=1, seed=0, keep="nonconvex"))
    task = bench.tasks[0]
    result = best_first(task, Budget(10**6))
    assert not result.solved and result.stop_reason == "depth"
    assert result.proposals_used == 3 * task.actions.n < 10**6


def test_bandit_degenerate_policy():
    # one action and one slot: the sampled program is fixed
    solvable = SynthesisTask([[4.0]], [[2.0]], ("SQRT",), 1, 1, gt_length=1)
    assert bandit_synthesize(solvable).proposals_used == 1
    hopeless = SynthesisTask([[4.0]], [[3.0]], ("SQRT",), 1, 1, gt_length=1)
    result = bandit_synthesize(hopeless, Budget(50))
    assert not result.solved and result.proposals_used == 50


def test_reinforce_sign():
    policy = BanditPolicy.uniform(2, 5, learning_rate=0.1)
    policy.baseline = 1.0
    policy.updates = 1
    policy.update([3, 1], reward=2.0)
    assert policy.slot_logits[0, 3] > 0 and policy.slot_logits[1, 1] > 0
    assert policy.length_logits[1] > policy.length_logits[0]


def test_bandit_learns_on_one_line_task():
    task = task_from_program("ADD f2 f1 f2", ["ADD"], n_vars=2)
    gt = task.actions.index(task.gt_program[0])
    policy = BanditPolicy.uniform(1, task.actions.n, learning_rate=0.05)
    rng = np.random.default_rng(0)
    start = np.exp(policy.slot_logits[0])[gt] / np.exp(policy.slot_logits[0]).sum()
    for _ in range(400):
        actions = policy.sample(rng)
        states = execute_program(task.inputs, [task.actions[a] for a in actions])
        policy.update(actions, reward(states, 0, task.context))
    probs = np.exp(policy.slot_logits[0]) / np.exp(policy.slot_logits[0]).sum()
    assert probs[gt] > 2 * start


def test_metropolis_rules():
    rng = np.random.default_rng(0)
    assert all(metropolis_accept(0.3, 2.0, rng) for _ in range(100))
    assert not any(metropolis_accept(-1e-3, 1e9, rng) for _ in range(100))
    hits = sum(metropolis_accept(-0.5, 2.0, rng) for _ in range(100_000)) / 100_000
    assert abs(hits - math.exp(-1)) < 0.02 * math.exp(-1)


def test_mcmc_candidate_invariants():
    task = task_from_program("ADD f1 f2 f3\nMUL f2 f1 f1", ["ADD", "MUL", "SQRT", "MADD"], max_length=5)
    rng = np.random.default_rng(0)
    prop = _Proposer(task, rng)
    cand = [prop.token() for _ in range(task.max_length)]
    for i in range(500):
        cand = prop.propose(cand, ("opcode", "operand", "resample", "swap")[i % 4])
        assert len(cand) == task.max_length
        program = tuple(line for line in cand if line is not None)
        assert all(line in task.actions._index for line in program)
        # NOP removal keeps the semantics of the remaining lines
        full = task.inputs
        for line in cand:
            if line is not None:
                full = execute_program(full, [line])
        assert full.tobytes() == execute_program(task.inputs, program).tobytes()


def test_mcmc_solves_easy_task_and_respects_budget():
    task = task_from_program("MUL f1 f2 f3", ["ADD", "MUL"], max_length=1)
    result = mcmc_synthesize(task, Budget(5000), np.random.default_rng(0))
    assert result.solved
    hard = task_from_program("ADD f1 f2 f3\nMUL f4 f1 f2\nSUB f2 f4 f1", ["ADD", "MUL", "SUB"], max_length=6)
    result = mcmc_synthesize(hard, Budget(300), np.random.default_rng(0), McmcConfig(beta=2.0))
    assert result.proposals_used <= 300


def test_qonly_budget_and_determinism():
    task = task_from_program("ADD f1 f2 f3\nMUL f4 f1 f2", ["ADD", "MUL"], max_length=3)
    a = qonly_synthesize(task, budget=Budget(350), rng=np.random.default_rng(3))
    b = qonly_synthesize(task, budget=Budget(350), rng=np.random.default_rng(3))
    assert a.to_dict() == b.to_dict()
    assert a.proposals_used <= 350
    if not a.solved:
        assert a.counters["train_steps"] == 300


def test_qonly_solves_one_line_task():
    task = task_from_program("MUL f2 f3 f1", ["ADD", "MUL"])
    result = qonly_synthesize(task, budget=Budget(3000), rng=np.random.default_rng(0))
    assert result.solved
    assert is_solved(reward(execute_program(task.inputs, task.gt_program), 0, task.context), task.context)
