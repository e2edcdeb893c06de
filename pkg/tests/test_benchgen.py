import numpy as np
import pytest

from rlgts.benchgen import (
    BenchmarkSpec, GenerationInfeasible, build_suite, generate_inputs, generate_program, is_convex, load_suite,
    rejection_reason, save_suite, suite_to_json,
)
from rlgts.isa import execute_program, parse_program
from rlgts.reward import is_solved, relative_errors, reward


def test_inputs_range_and_determinism():
    x = generate_inputs(4, 5, np.random.default_rng(0))
    assert x.shape == (5, 4)
    assert np.all((np.abs(x) >= 1) & (np.abs(x) <= 10))
    assert np.all(x != 0)
    assert x.tobytes() == generate_inputs(4, 5, np.random.default_rng(0)).tobytes()
    with pytest.raises(ValueError):
        generate_inputs(0, 5, np.random.default_rng(0))


def reason(text, inputs):
    program = parse_program(text)
    return rejection_reason(program, inputs, execute_program(inputs, program))


def test_dead_line_rejected():
    inputs = generate_inputs(4, 5, np.random.default_rng(1))
    assert reason("ADD f1 f2 f3\nMUL f1 f2 f3", inputs) == "deletable"


def test_live_program_accepted():
    inputs = generate_inputs(4, 5, np.random.default_rng(1))
    assert reason("ADD f1 f2 f3\nMUL f4 f1 f2", inputs) is None


def test_nonfinite_and_identity_rejected():
    inputs = np.array([[-4.0, -9.0, 2.0, 3.0]])
    assert reason("SQRT f1 f2", inputs) == "nonfinite"
    assert reason("MAX f1 f1 f1", inputs) == "identity"


def test_generation_infeasible():
    with pytest.raises(GenerationInfeasible):
        generate_program(2, ["EQ"], 1, 5, np.random.default_rng(0), max_rejections=50)


def staged_argmax_solves(task):
    """Independent convexity oracle: commit to the first reward-argmax line at each depth."""
    prefix, states = [], task.inputs
    for _ in range(task.max_length):
        best = None
        for line in task.actions.actions:
            nxt = execute_program(states, [line])
            r = reward(nxt, len(prefix), task.context, task.params)
            if is_solved(r, task.context, task.params, nxt):
                return True
            if best is None or r > best[0]:
                best = (r, line, nxt)
        prefix.append(best[1])
        states = best[2]
    return False


def test_convexity_matches_staged_argmax_oracle():
    bench = build_suite(BenchmarkSpec(length=2, max_length=3, count=12, seed=5))
    assert bench.convex == [staged_argmax_solves(t) for t in bench.tasks]
    assert 0 < sum(bench.convex) < len(bench.convex)


def test_suite_invariants():
    bench = build_suite(BenchmarkSpec(length=3, max_length=4, count=10, seed=2, n_instructions=3))
    assert len(bench.tasks) == 10
    for task in bench.tasks:
        prog = task.gt_program
        assert len(prog) == 3 and len(task.instructions) == 3
        assert execute_program(task.inputs, prog).tobytes() == task.outputs.tobytes()
        for i in range(3):
            shorter = prog[:i] + prog[i + 1:]
            assert relative_errors(execute_program(task.inputs, shorter), task.context, task.params).any()
        assert is_solved(reward(task.outputs, 2, task.context), task.context, task.params, task.outputs)


@pytest.mark.parametrize("keep", ["nonconvex", "convex"])
def test_keep_filter(keep):
    bench = build_suite(BenchmarkSpec(length=2, max_length=2, count=4, seed=3, keep=keep))
    assert len(bench.tasks) == 4
    assert all(c == (keep == "convex") for c in bench.convex)
    assert all(is_convex(t) == (keep == "convex") for t in bench.tasks)


def test_fixed_instruction_set_and_spec_validation():
    bench = build_suite(BenchmarkSpec(length=1, max_length=1, count=3, instructions=("MUL", "ADD")))
    assert all(t.instructions == ("ADD", "MUL") for t in bench.tasks)
    assert bench.tasks[0].actions.n == 128
    with pytest.raises(ValueError):
        BenchmarkSpec(length=4, max_length=3)
    with pytest.raises(ValueError):
        BenchmarkSpec(length=1, max_length=1, keep="maybe")


def test_all_instruction_draw():
    bench = build_suite(BenchmarkSpec(length=1, max_length=1, count=2, n_instructions=17))
    assert all(t.actions.n == 1808 for t in bench.tasks)


def test_suite_files_are_byte_identical(tmp_path):
    spec = BenchmarkSpec(length=2, max_length=3, count=5, seed=9)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_suite(build_suite(spec), a)
    save_suite(build_suite(spec), b)
    assert a.read_bytes() == b.read_bytes()
    back = load_suite(a)
    assert back.spec == spec
    assert suite_to_json(back) == a.read_text()


def test_load_rejects_unknown_version(tmp_path):
    path = tmp_path / "s.json"
    path.write_text('{"format_version": 99}')
    with pytest.raises(ValueError):
        load_suite(path)


def test_unsatisfiable_keep_filter_raises():
    # every one-line task is convex
    with pytest.raises(GenerationInfeasible):
        build_suite(BenchmarkSpec(length=1, max_length=1, count=1, keep="nonconvex", max_rejections=20))
