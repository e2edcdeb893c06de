"""Small task builders shared by the test modules."""

import numpy as np

from rlgts.benchgen import generate_inputs
from rlgts.env import SynthesisTask
from rlgts.isa import execute_program, parse_program


def task_from_program(text: str, instructions, n_vars: int = 4, n_examples: int = 5, max_length=None,
                      seed: int = 0, task_id: str = "t") -> SynthesisTask:
    program = parse_program(text)
    inputs = generate_inputs(n_vars, n_examples, np.random.default_rng(seed))
    outputs = execute_program(inputs, program)
    return SynthesisTask(inputs, outputs, tuple(instructions), n_vars, max_length or len(program),
                         gt_program=program, task_id=task_id)
