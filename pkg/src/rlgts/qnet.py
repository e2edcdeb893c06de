"""Dueling double Q-network with hand-written backpropagation and prioritized replay.

Architecture: the numeric state block goes through two ReLU layers, the
program so far goes through a two-layer LSTM (first line first), the two
embeddings are concatenated and passed through two more ReLU layers, and
value / advantage streams of two layers each are combined into Q-values.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .env import Observation

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkConfig:
    fc_hidden: int = 256
    lstm_hidden: int = 256
    trunk_hidden: int = 256
    stream_hidden: int = 128
    learning_rate: float = 1e-3
    gamma: float = 0.99
    batch_size: int = 64
    target_sync_every: int = 100
    epsilon: float = 0.1
    alpha: float = 0.6
    beta_start: float = 0.5
    beta_end: float = 1.0
    beta_anneal_steps: int = 10_000
    priority_eps: float = 1e-6
    optimizer: str = "sgd"  # "sgd" or "adam"
    max_grad_norm: Optional[float] = None
    dtype: str = "float64"

    def __post_init__(self):
        for name in ("fc_hidden", "lstm_hidden", "trunk_hidden", "stream_hidden", "batch_size", "target_sync_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must be in [0, 1]")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def beta(self, iteration: int) -> float:
        """Importance exponent, linear from ``beta_start`` to ``beta_end``."""
        frac = min(1.0, iteration / self.beta_anneal_steps)
        return self.beta_start + frac * (self.beta_end - self.beta_start)


# Small widths used for desk-scale experiments on a single CPU core.
DESK_CONFIG = NetworkConfig(fc_hidden=64, lstm_hidden=32, trunk_hidden=64, stream_hidden=32,
                            optimizer="adam", dtype="float32")


@dataclass
class ObsBatch:
    numeric: np.ndarray  # (B, state_dim)
    program: np.ndarray  # (B, p, line_width)
    lengths: np.ndarray  # (B,)

    def __len__(self) -> int:
        return self.numeric.shape[0]

    @classmethod
    def stack(cls, observations: Sequence[Observation]) -> "ObsBatch":
        return cls(
            np.stack([o.numeric.ravel() for o in observations]),
            np.stack([o.program for o in observations]),
            np.array([o.length for o in observations], dtype=np.int64),
        )

    def concat(self, other: "ObsBatch") -> "ObsBatch":
        return ObsBatch(
            np.concatenate([self.numeric, other.numeric]),
            np.concatenate([self.program, other.program]),
            np.concatenate([self.lengths, other.lengths]),
        )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class QNetwork:
    """Parameters live in one flat float64 vector; ``params`` holds named views into it."""

    def __init__(self, config: NetworkConfig, state_dim: int, line_width: int, max_length: int,
                 n_actions: int, rng: np.random.Generator | None = None):
        self.config = config
        self.state_dim = state_dim
        self.line_width = line_width
        self.max_length = max_length
        self.n_actions = n_actions
        rng = rng if rng is not None else np.random.default_rng(0)
        H = config.lstm_hidden
        init = {}
        for name in ("s1", "s2", "l1", "l2", "t1", "t2", "v1", "v2", "a1", "a2"):
            fan_in, fan_out = self._shape_of(f"{name}.W")
            init[f"{name}.W"] = _glorot(rng, fan_in, fan_out)
            init[f"{name}.b"] = np.zeros(fan_out)
        self.names = tuple(init)
        self.dtype = np.dtype(config.dtype)
        self.flat = np.concatenate([init[k].ravel() for k in self.names]).astype(self.dtype)
        self._bind()
        pre = np.full(4 * H, 0.5)
        pre[2 * H:3 * H] = 1.0
        offset = np.full(4 * H, 0.5)
        offset[2 * H:3 * H] = 0.0
        self._gate_affine = tuple(v.astype(self.dtype) for v in (pre, pre, offset))

    def _bind(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        offset = 0
        for k in self.names:
            shape = self._shape_of(k)
            size = int(np.prod(shape))
            self.params[k] = self.flat[offset:offset + size].reshape(shape)
            offset += size

    def _shape_of(self, k: str) -> tuple[int, ...]:
        c = self.config
        H = c.lstm_hidden
        fan = {
            "s1": (self.state_dim, c.fc_hidden), "s2": (c.fc_hidden, c.fc_hidden),
            "l1": (self.line_width + H, 4 * H), "l2": (2 * H, 4 * H),
            "t1": (c.fc_hidden + H, c.trunk_hidden), "t2": (c.trunk_hidden, c.trunk_hidden),
            "v1": (c.trunk_hidden, c.stream_hidden), "v2": (c.stream_hidden, 1),
            "a1": (c.trunk_hidden, c.stream_hidden), "a2": (c.stream_hidden, self.n_actions),
        }[k.split(".")[0]]
        return fan if k.endswith(".W") else (fan[1],)

    def copy(self) -> "QNetwork":
        other = object.__new__(QNetwork)
        other.__dict__.update(self.__dict__)
        other.flat = self.flat.copy()
        other._bind()
        return other

    def load_params_from(self, other: "QNetwork") -> None:
        self.flat[...] = other.flat

    def flatten(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([grads[k].ravel() for k in self.names])

    # forward / backward

    def _lstm_forward(self, layer: str, xs: np.ndarray, mask: np.ndarray, keep_cache: bool = True):
        W, b = self.params[f"{layer}.W"], self.params[f"{layer}.b"]
        B, T, d_in = xs.shape
        H = self.config.lstm_hidden
        # sigmoid(x) = 0.5 * tanh(x / 2) + 0.5, so one tanh pass covers all four gates
        pre, slope, offset = self._gate_affine
        Wx, Wh = W[:d_in] * pre, W[d_in:] * pre
        xw = (xs.reshape(B * T, d_in) @ Wx).reshape(B, T, 4 * H) + b * pre
        dt = self.dtype
        h = np.zeros((B, H), dt)
        c = np.zeros((B, H), dt)
        outs = np.empty((B, T, H), dt)
        if keep_cache:
            hs, cs, tcs = (np.empty((B, T, H), dt) for _ in range(3))
            gates = np.empty((B, T, 4 * H), dt)
        for t in range(T):
            a = np.tanh(xw[:, t] + h @ Wh)
            a *= slope
            a += offset
            i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
            c_new = f * c
            c_new += i * g
            tc = np.tanh(c_new)
            if keep_cache:
                hs[:, t], cs[:, t], gates[:, t], tcs[:, t] = h, c, a, tc
            h_new = o * tc
            m = mask[:, t:t + 1]
            if m.all():
                c, h = c_new, h_new
            else:
                c = c + m * (c_new - c)
                h = h + m * (h_new - h)
            outs[:, t] = h
        cache = (xs, hs, cs, gates, tcs, mask) if keep_cache else None
        return outs, h, cache

    def _lstm_backward(self, layer: str, d_outs: np.ndarray, cache, grads):
        W = self.params[f"{layer}.W"]
        xs, h_prev, c_prev, gates, tcs, mask = cache
        B, T, H = d_outs.shape
        d_in = xs.shape[2]
        Wh_T = W[d_in:].T
        dt = self.dtype
        dZ = np.empty((B, T, 4 * H), dt)
        dh = np.zeros((B, H), dt)
        dc = np.zeros((B, H), dt)
        for t in reversed(range(T)):
            a = gates[:, t]
            i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
            tc = tcs[:, t]
            m = mask[:, t:t + 1]
            dh = dh + d_outs[:, t]
            dh_new = m * dh
            dc_new = m * dc + dh_new * o * (1.0 - tc * tc)
            dz = dZ[:, t]
            dz[:, :H] = dc_new * g * i * (1.0 - i)
            dz[:, H:2 * H] = dc_new * c_prev[:, t] * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = dc_new * i * (1.0 - g * g)
            dz[:, 3 * H:] = dh_new * tc * o * (1.0 - o)
            dh = (1.0 - m) * dh + dz @ Wh_T
            dc = (1.0 - m) * dc + dc_new * f
        dZ2 = dZ.reshape(B * T, 4 * H)
        grads[f"{layer}.W"] = np.concatenate([
            xs.reshape(B * T, d_in).T @ dZ2,
            h_prev.reshape(B * T, H).T @ dZ2,
        ])
        grads[f"{layer}.b"] = dZ2.sum(axis=0)
        return (dZ2 @ W[:d_in].T).reshape(B, T, d_in)

    def _affine(self, name, x):
        return x @ self.params[f"{name}.W"] + self.params[f"{name}.b"]

    def forward(self, batch: ObsBatch, keep_cache: bool = False):
        """Q-values of shape ``(B, n)``; with ``keep_cache`` also returns the backward cache."""
        dt = self.dtype
        x = batch.numeric.astype(dt, copy=False)
        if x.shape[1:] != (self.state_dim,) or batch.program.shape[1:] != (self.max_length, self.line_width):
            raise ValueError(
                f"observation shape {x.shape[1:]}/{batch.program.shape[1:]} does not match network "
                f"({self.state_dim},)/({self.max_length}, {self.line_width})"
            )
        acts = {"s1": x}
        h = np.maximum(self._affine("s1", x), 0.0)
        acts["s2"] = h
        state_emb = np.maximum(self._affine("s2", h), 0.0)

        T = int(batch.lengths.max()) if len(batch) else 0
        B = len(batch)
        if T > 0:
            mask = (np.arange(T)[None, :] < batch.lengths[:, None]).astype(dt)
            xs = batch.program[:, :T].astype(dt, copy=False)
            out1, _, cache1 = self._lstm_forward("l1", xs, mask, keep_cache)
            _, prog_emb, cache2 = self._lstm_forward("l2", out1, mask, keep_cache)
        else:
            mask = cache1 = cache2 = None
            prog_emb = np.zeros((B, self.config.lstm_hidden), dt)

        u = np.concatenate([state_emb, prog_emb], axis=1)
        acts["t1"] = u
        t1 = np.maximum(self._affine("t1", u), 0.0)
        acts["t2"] = t1
        trunk = np.maximum(self._affine("t2", t1), 0.0)
        acts["v1"] = acts["a1"] = trunk
        v1 = np.maximum(self._affine("v1", trunk), 0.0)
        acts["v2"] = v1
        value = self._affine("v2", v1)
        a1 = np.maximum(self._affine("a1", trunk), 0.0)
        acts["a2"] = a1
        adv = self._affine("a2", a1)
        q = value + adv - adv.mean(axis=1, keepdims=True)
        if not keep_cache:
            return q
        cache = {
            "acts": acts, "s_out": (h, state_emb), "t_out": (t1, trunk), "v1": v1, "a1": a1,
            "T": T, "cache1": cache1, "cache2": cache2, "value": value, "adv": adv,
        }
        return q, cache

    def __call__(self, batch: ObsBatch) -> np.ndarray:
        return self.forward(batch)

    def backward(self, cache, dq: np.ndarray) -> dict[str, np.ndarray]:
        p = self.params
        acts = cache["acts"]
        grads: dict[str, np.ndarray] = {}

        def dense(name, dy):
            x = acts[name]
            grads[f"{name}.W"] = x.T @ dy
            grads[f"{name}.b"] = dy.sum(axis=0)
            return dy @ p[f"{name}.W"].T

        d_value = dq.sum(axis=1, keepdims=True)
        d_adv = dq - dq.mean(axis=1, keepdims=True)
        d_a1 = dense("a2", d_adv) * (cache["a1"] > 0)
        d_trunk = dense("a1", d_a1)
        d_v1 = dense("v2", d_value) * (cache["v1"] > 0)
        d_trunk = d_trunk + dense("v1", d_v1)
        t1, trunk = cache["t_out"]
        d_t1 = dense("t2", d_trunk * (trunk > 0)) * (t1 > 0)
        d_u = dense("t1", d_t1)

        H = self.config.lstm_hidden
        fc_h = self.config.fc_hidden
        d_state, d_prog = d_u[:, :fc_h], d_u[:, fc_h:]
        h, state_emb = cache["s_out"]
        d_h = dense("s2", d_state * (state_emb > 0)) * (h > 0)
        dense("s1", d_h)

        T = cache["T"]
        if T > 0:
            B = dq.shape[0]
            d_outs2 = np.zeros((B, T, H), self.dtype)
            d_outs2[:, T - 1] = d_prog  # masking carries the final h back to the last real step
            d_out1 = self._lstm_backward("l2", d_outs2, cache["cache2"], grads)
            self._lstm_backward("l1", d_out1, cache["cache1"], grads)
        else:
            for layer in ("l1", "l2"):
                grads[f"{layer}.W"] = np.zeros_like(p[f"{layer}.W"])
                grads[f"{layer}.b"] = np.zeros_like(p[f"{layer}.b"])
        return grads

    # checkpoints

    def save(self, path: str | Path) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "dims": [self.state_dim, self.line_width, self.max_length, self.n_actions],
        }
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **self.params)

    @classmethod
    def load(cls, path: str | Path) -> "QNetwork":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            if meta["version"] != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta['version']}")
            net = cls(NetworkConfig(**meta["config"]), *meta["dims"])
            for k in net.params:
                arr = data[k]
                if arr.shape != net.params[k].shape:
                    raise ValueError(f"{k}: checkpoint shape {arr.shape} != {net.params[k].shape}")
                net.params[k][...] = arr
        return net


class SumTree:
    """Binary sum tree over leaf weights; supports vectorized prefix-sum lookup."""

    def __init__(self, capacity: int = 1024):
        cap = 1
        while cap < capacity:
            cap *= 2
        self.capacity = cap
        self.tree = np.zeros(2 * cap)

    def _grow(self, needed: int) -> None:
        cap = self.capacity
        while cap < needed:
            cap *= 2
        leaves = self.tree[self.capacity:]
        self.capacity = cap
        self.tree = np.zeros(2 * cap)
        self.tree[cap:cap + len(leaves)] = leaves
        for i in range(cap - 1, 0, -1):
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1]

    @property
    def total(self) -> float:
        return float(self.tree[1])

    def leaf(self, idx) -> np.ndarray:
        return self.tree[self.capacity + np.asarray(idx)]

    def update(self, idx, values) -> None:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        if idx.size and idx.max() >= self.capacity:
            self._grow(int(idx.max()) + 1)
        values = np.broadcast_to(np.asarray(values, dtype=np.float64), idx.shape)
        nodes = idx + self.capacity
        self.tree[nodes] = values
        for _ in range(self.capacity.bit_length() - 1):
            nodes = nodes // 2
            self.tree[nodes] = self.tree[2 * nodes] + self.tree[2 * nodes + 1]

    def find(self, u: np.ndarray) -> np.ndarray:
        """Leaf indices whose cumulative-weight interval contains each ``u``."""
        u = np.array(u, dtype=np.float64)
        node = np.ones(u.shape, dtype=np.int64)
        for _ in range(self.capacity.bit_length() - 1):
            left = 2 * node
            lw = self.tree[left]
            go_right = u >= lw
            u = np.where(go_right, u - lw, u)
            node = np.where(go_right, left + 1, left)
        return node - self.capacity


class ReplayBuffer:
    """Append-only proportional prioritized replay; nothing is ever evicted."""

    def __init__(self, state_dim: int, max_length: int, line_width: int, alpha: float = 0.6,
                 capacity: int = 1024):
        self.alpha = alpha
        self.size = 0
        self.max_priority = 1.0
        self._tree = SumTree(capacity)
        self._cap = capacity
        self._dims = (state_dim, max_length, line_width)
        self._alloc(capacity)

    def _alloc(self, cap: int) -> None:
        sd, p, w = self._dims
        fresh = {
            "numeric": np.zeros((cap, sd)), "program": np.zeros((cap, p, w)), "length": np.zeros(cap, np.int64),
            "action": np.zeros(cap, np.int64), "reward": np.zeros(cap), "terminal": np.zeros(cap, bool),
            "next_numeric": np.zeros((cap, sd)), "next_program": np.zeros((cap, p, w)),
            "next_length": np.zeros(cap, np.int64), "priority": np.zeros(cap),
        }
        if self.size:
            for k, arr in fresh.items():
                arr[:self.size] = self._data[k][:self.size]
        self._data = fresh
        self._cap = cap

    def __len__(self) -> int:
        return self.size

    def add(self, obs: Observation, action: int, reward: float, next_obs: Observation, terminal: bool,
            priority: float | None = None) -> int:
        if self.size == self._cap:
            self._alloc(2 * self._cap)
        i = self.size
        d = self._data
        d["numeric"][i] = obs.numeric.ravel()
        d["program"][i] = obs.program
        d["length"][i] = obs.length
        d["action"][i] = action
        d["reward"][i] = reward
        d["terminal"][i] = terminal
        d["next_numeric"][i] = next_obs.numeric.ravel()
        d["next_program"][i] = next_obs.program
        d["next_length"][i] = next_obs.length
        pr = self.max_priority if priority is None else float(priority)
        if not pr > 0:
            raise ValueError("priority must be positive")
        d["priority"][i] = pr
        self.max_priority = max(self.max_priority, pr)
        self._tree.update(i, pr ** self.alpha)
        self.size += 1
        return i

    @property
    def priorities(self) -> np.ndarray:
        return self._data["priority"][:self.size]

    def probabilities(self) -> np.ndarray:
        w = self.priorities ** self.alpha
        return w / w.sum()

    def update_priorities(self, idx: np.ndarray, priorities: np.ndarray) -> None:
        priorities = np.asarray(priorities, dtype=np.float64)
        if np.any(priorities <= 0):
            raise ValueError("priority must be positive")
        self._data["priority"][idx] = priorities
        self.max_priority = max(self.max_priority, float(priorities.max()))
        self._tree.update(idx, priorities ** self.alpha)

    def sample(self, batch_size: int, beta: float, rng: np.random.Generator):
        """Draw ``batch_size`` indices proportionally to ``priority**alpha``.

        Returns ``(indices, weights)`` with importance weights
        ``(P(i) * size) ** -beta`` normalised by their batch maximum.
        """
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        total = self._tree.total
        idx = self._tree.find(rng.random(batch_size) * total)
        idx = np.minimum(idx, self.size - 1)
        prob = self._tree.leaf(idx) / total
        w = (prob * self.size) ** (-beta)
        return idx, w / w.max()

    def batch(self, idx: np.ndarray):
        d = self._data
        s = ObsBatch(d["numeric"][idx], d["program"][idx], d["length"][idx])
        s2 = ObsBatch(d["next_numeric"][idx], d["next_program"][idx], d["next_length"][idx])
        return s, d["action"][idx], d["reward"][idx], s2, d["terminal"][idx]


def td_loss(net: QNetwork, target: QNetwork, s: ObsBatch, actions: np.ndarray, rewards: np.ndarray,
            s_next: ObsBatch, terminal: np.ndarray, gamma: float, weights: np.ndarray | None = None):
    """Importance-weighted double-Q loss.

    Returns ``(loss, td_errors, grads)``; ``grads`` is the semi-gradient with
    respect to ``net`` (the bootstrap target is held fixed).
    """
    B = len(s)
    if B == 0:
        raise ValueError("empty batch")
    weights = np.ones(B) if weights is None else np.asarray(weights, dtype=np.float64)
    q_s, cache = net.forward(s, keep_cache=True)
    best_next = np.argmax(net.forward(s_next), axis=1)
    q_next_target = target.forward(s_next)[np.arange(B), best_next]
    y = rewards + gamma * q_next_target * (1.0 - terminal.astype(np.float64))
    err = y - q_s[np.arange(B), actions]
    loss = float(np.mean(weights * err * err))
    dq = np.zeros_like(q_s)
    dq[np.arange(B), actions] = -2.0 * weights * err / B
    grads = net.backward(cache, dq)
    return loss, err, grads


class Learner:
    """Online network, target network, replay buffer and optimizer state for one task."""

    def __init__(self, config: NetworkConfig, state_dim: int, line_width: int, max_length: int,
                 n_actions: int, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.net = QNetwork(config, state_dim, line_width, max_length, n_actions, rng)
        self.target = self.net.copy()
        self.buffer = ReplayBuffer(state_dim, max_length, line_width, alpha=config.alpha)
        self.iterations = 0
        self.syncs = 0
        self.last_loss = float("nan")
        self._m = np.zeros_like(self.net.flat)
        self._v = np.zeros_like(self.net.flat)

    def q_values(self, obs: Sequence[Observation] | ObsBatch) -> np.ndarray:
        batch = obs if isinstance(obs, ObsBatch) else ObsBatch.stack(obs)
        return self.net.forward(batch)

    def sync_target(self) -> None:
        self.target.load_params_from(self.net)
        self.syncs += 1

    def _apply(self, grads: dict[str, np.ndarray]) -> None:
        c = self.config
        g = self.net.flatten(grads)
        if c.max_grad_norm is not None:
            norm = float(np.sqrt(g @ g))
            if norm > c.max_grad_norm:
                g *= c.max_grad_norm / norm
        if c.optimizer == "sgd":
            self.net.flat -= c.learning_rate * g
            return
        b1, b2, eps = 0.9, 0.999, 1e-8
        step = self.iterations + 1
        self._m *= b1
        self._m += (1 - b1) * g
        self._v *= b2
        self._v += (1 - b2) * g * g
        lr = c.learning_rate * np.sqrt(1 - b2 ** step) / (1 - b1 ** step)
        self.net.flat -= lr * self._m / (np.sqrt(self._v) + eps)

    def train_step(self) -> float:
        c = self.config
        beta = c.beta(self.iterations)
        idx, w = self.buffer.sample(c.batch_size, beta, self.rng)
        s, a, r, s2, term = self.buffer.batch(idx)
        loss, err, grads = td_loss(self.net, self.target, s, a, r, s2, term, c.gamma, w)
        self._apply(grads)
        self.buffer.update_priorities(idx, np.abs(err) + c.priority_eps)
        self.iterations += 1
        if self.iterations % c.target_sync_every == 0:
            self.sync_target()
        self.last_loss = loss
        return loss
