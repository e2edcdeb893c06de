"""Reinforcement-learning guided tree search for straight-line floating-point programs."""

from .isa import ActionSpace, Line, Opcode, action_count, execute_program, format_program, parse_program
from .reward import RewardContext, RewardParams, reward
from .env import SynthesisTask
from .budget import Budget, Evaluator, SynthesisResult
from .search import RLGTSConfig, synthesize

__all__ = [
    "ActionSpace", "Line", "Opcode", "action_count", "execute_program", "format_program", "parse_program",
    "RewardContext", "RewardParams", "reward", "SynthesisTask", "Budget", "Evaluator", "SynthesisResult",
    "RLGTSConfig", "synthesize",
]
