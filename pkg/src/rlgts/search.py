"""Q-guided priority search tree over partial programs.

Every (partial program, next line) edge is evaluated at most once. The
frontier is ordered by the current Q-network; sampling alternates with
training, and all unexplored edges are rescored after each training round.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .budget import Budget, BudgetExhausted, Evaluator, SynthesisResult
from .env import Observation, SynthesisTask, observe, EnvState
from .isa import Program
from .qnet import DESK_CONFIG, Learner, NetworkConfig, ObsBatch

RESCORE_CHUNK = 2048


class TreeExhausted(Exception):
    """Every program up to the depth cap has been evaluated."""


@dataclass
class RLGTSConfig:
    network: NetworkConfig = field(default_factory=lambda: DESK_CONFIG)
    samples_per_round: int = 100
    train_steps_per_round: int = 100
    audit: bool = False


class TreeNode:
    __slots__ = ("node_id", "program", "depth", "states", "obs", "scores", "children", "reward")

    def __init__(self, node_id: int, program: Program, states: np.ndarray, obs: Observation, reward: float):
        self.node_id = node_id
        self.program = program
        self.depth = len(program)
        self.states = states
        self.obs = obs
        self.scores: Optional[np.ndarray] = None  # float32 Q per action, -inf once explored
        self.children: dict[int, int] = {}
        self.reward = reward

    @property
    def unexplored(self) -> np.ndarray:
        if self.scores is None:
            return np.zeros(0, dtype=np.int64)
        return np.flatnonzero(self.scores != -np.inf)


@dataclass
class Experience:
    obs: Observation
    action: int
    reward: float
    next_obs: Observation
    terminal: bool


class SearchTree:
    def __init__(self, task: SynthesisTask, learner: Learner, evaluator: Evaluator,
                 rng: np.random.Generator, epsilon: float = 0.1):
        self.task = task
        self.learner = learner
        self.evaluator = evaluator
        self.rng = rng
        self.epsilon = epsilon
        self.n = task.actions.n
        self.nodes: list[TreeNode] = []
        self.heap: list[tuple] = []
        self.generation = 0
        self.nbytes = 0
        self._open = np.zeros(1024, dtype=np.int64)  # unexplored edge count per node
        root_state = EnvState(task.inputs.copy(), ())
        self._add_node((), root_state.states, observe(root_state, task), 0.0)

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    @property
    def open_edges(self) -> int:
        return int(self._open[:len(self.nodes)].sum())

    def _add_node(self, program: Program, states: np.ndarray, obs: Observation, reward: float) -> TreeNode:
        node = TreeNode(len(self.nodes), program, states, obs, reward)
        self.nodes.append(node)
        if node.node_id >= len(self._open):
            self._open = np.concatenate([self._open, np.zeros_like(self._open)])
        self.nbytes += states.nbytes + obs.numeric.nbytes + obs.program.nbytes + 256
        if node.depth < self.task.max_length:
            node.scores = self.learner.q_values([obs])[0].astype(np.float32)
            self._open[node.node_id] = self.n
            self.nbytes += node.scores.nbytes
            self._push(node)
        self.evaluator.check_memory(self.nbytes)
        return node

    def _push(self, node: TreeNode) -> None:
        if self._open[node.node_id] == 0:
            return
        a = int(np.argmax(node.scores))  # first index on ties
        heapq.heappush(self.heap, (-float(node.scores[a]), node.depth, a, node.node_id, self.generation))

    def _pop_greedy(self) -> tuple[TreeNode, int]:
        while self.heap:
            _, _, a, nid, gen = heapq.heappop(self.heap)
            node = self.nodes[nid]
            if gen != self.generation or node.scores[a] == -np.inf:
                # stale: the node's best edge went to an epsilon draw or scores changed
                if gen == self.generation:
                    self._push(node)
                continue
            return node, a
        raise TreeExhausted

    def _pick_random(self) -> tuple[TreeNode, int]:
        counts = self._open[:len(self.nodes)]
        k = int(self.rng.integers(counts.sum()))
        cum = np.cumsum(counts)
        nid = int(np.searchsorted(cum, k, side="right"))
        offset = k - (int(cum[nid - 1]) if nid else 0)
        node = self.nodes[nid]
        return node, int(node.unexplored[offset])

    def expand_best(self) -> tuple[TreeNode, Experience, bool]:
        """Evaluate one unexplored edge and grow the tree by one node.

        Returns the new node, the transition record, and whether the new
        program solves the task.
        """
        if self.open_edges == 0:
            raise TreeExhausted
        greedy = self.rng.random() >= self.epsilon
        node, a = self._pop_greedy() if greedy else self._pick_random()
        line = self.task.actions[a]
        try:
            states, r, solved = self.evaluator.extend(node.states, node.program, line)
        except BudgetExhausted:
            if greedy:
                heapq.heappush(self.heap, (-float(node.scores[a]), node.depth, a, node.node_id, self.generation))
            raise
        node.scores[a] = -np.inf
        self._open[node.node_id] -= 1
        if greedy:
            self._push(node)
        program = node.program + (line,)
        child_obs = observe(EnvState(states, program), self.task)
        terminal = solved or len(program) == self.task.max_length
        child = self._add_node(program, states, child_obs, r)
        node.children[a] = child.node_id
        return child, Experience(node.obs, a, r, child_obs, terminal), solved

    def rescore(self) -> None:
        frontier = [node for node in self.nodes if self._open[node.node_id] > 0]
        for start in range(0, len(frontier), RESCORE_CHUNK):
            chunk = frontier[start:start + RESCORE_CHUNK]
            q = self.learner.q_values([node.obs for node in chunk]).astype(np.float32)
            for node, row in zip(chunk, q):
                if node.children:
                    row[list(node.children)] = -np.inf
                node.scores = row
        self.generation += 1
        self.heap = []
        for node in frontier:
            a = int(np.argmax(node.scores))
            self.heap.append((-float(node.scores[a]), node.depth, a, node.node_id, self.generation))
        heapq.heapify(self.heap)


def make_learner(task: SynthesisTask, config: NetworkConfig, rng: np.random.Generator) -> Learner:
    obs = observe(EnvState(task.inputs, ()), task)
    return Learner(config, obs.numeric.size, task.actions.line_width, task.max_length, task.actions.n, rng)


def synthesize(task: SynthesisTask, config: RLGTSConfig = RLGTSConfig(), budget: Budget = Budget(),
               rng: np.random.Generator | None = None, record_wall_time: bool = False,
               evaluator: Evaluator | None = None) -> SynthesisResult:
    """Run Q-guided tree search until solved, out of budget, or the tree is exhausted."""
    rng = rng if rng is not None else np.random.default_rng(0)
    evaluator = evaluator or Evaluator(task, budget, audit=config.audit)
    learner = make_learner(task, config.network, rng)
    counters = {"samples": 0, "train_steps": 0, "rescores": 0}
    stop = "budget"
    tree = None
    try:
        tree = SearchTree(task, learner, evaluator, rng, config.network.epsilon)
        while True:
            for _ in range(config.samples_per_round):
                _, exp, solved = tree.expand_best()
                counters["samples"] += 1
                learner.buffer.add(exp.obs, exp.action, exp.reward, exp.next_obs, exp.terminal)
                if solved:
                    raise StopIteration
            for _ in range(config.train_steps_per_round):
                learner.train_step()
                counters["train_steps"] += 1
            tree.rescore()
            counters["rescores"] += 1
    except StopIteration:
        stop = "solved"
    except BudgetExhausted as e:
        stop = e.reason
    except TreeExhausted:
        stop = "exhausted"
    counters["nodes"] = len(tree.nodes) if tree is not None else 0
    return evaluator.result("rlgts", stop, counters, record_wall_time)
