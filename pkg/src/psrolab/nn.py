"""Small numpy feed-forward Q-networks, Adam, replay buffers and a DQN learner.

Checkpoint blob layout (all integers little-endian uint32, floats
little-endian float64)::

    b"PSQN"                     magic
    version                     currently 1
    L                           number of layer widths (input, hidden..., output)
    width[0] ... width[L-1]
    W0 (width[0] x width[1], row-major), b0 (width[1]), W1, b1, ...
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from psrolab.errors import CheckpointError, ConfigError, ContractError, NumericError

BLOB_MAGIC = b"PSQN"
BLOB_VERSION = 1
PROB_FLOOR = 1e-3


class QNetwork:
    """MLP with ReLU hidden layers and a linear output layer.

    ``params`` is the flat list ``[W0, b0, W1, b1, ...]`` with ``W`` of shape
    (fan_in, fan_out).  Inputs may be a single vector or a batch (rows).
    """

    def __init__(self, sizes, rng: np.random.Generator | None = None, zero: bool = False):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ConfigError(f"bad layer widths {self.sizes}")
        if rng is None and not zero:
            rng = np.random.default_rng(0)
        self.params = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if zero:
                w = np.zeros((fan_in, fan_out))
            else:
                bound = np.sqrt(6.0 / fan_in)
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.params += [w, np.zeros(fan_out)]

    @property
    def input_size(self) -> int:
        return self.sizes[0]

    @property
    def output_size(self) -> int:
        return self.sizes[-1]

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ContractError(f"input width {x.shape[-1]} != network input {self.sizes[0]}")
        return x

    def forward(self, x) -> np.ndarray:
        x = self._check(x)
        h = x
        n = len(self.params) // 2
        for k in range(n):
            h = h @ self.params[2 * k] + self.params[2 * k + 1]
            if k < n - 1:
                h = np.maximum(h, 0.0)
        return h

    __call__ = forward

    def gradient(self, x, actions, targets, weights=None):
        """Gradient of the mean squared TD error on the taken actions.

        loss = mean_b w_b * (Q(x_b, a_b) - target_b)^2

        Returns ``(loss, grads, td_errors)`` where ``grads`` matches ``params``
        and ``td_errors = Q(x, a) - target``.
        """
        x = np.atleast_2d(self._check(x))
        actions = np.asarray(actions, dtype=int)
        targets = np.asarray(targets, dtype=float)
        if not np.all(np.isfinite(targets)):
            raise NumericError("non-finite TD target")
        if len(actions) == 0:
            raise ContractError("empty batch")
        batch = x.shape[0]
        w = np.ones(batch) if weights is None else np.asarray(weights, dtype=float)

        n = len(self.params) // 2
        acts = [x]
        h = x
        for k in range(n):
            h = h @ self.params[2 * k] + self.params[2 * k + 1]
            if k < n - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        q = acts[-1]
        rows = np.arange(batch)
        td = q[rows, actions] - targets
        loss = float(np.mean(w * td * td))

        delta = np.zeros_like(q)
        delta[rows, actions] = 2.0 * w * td / batch
        grads = [None] * len(self.params)
        for k in range(n - 1, -1, -1):
            grads[2 * k] = acts[k].T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.params[2 * k].T) * (acts[k] > 0)
        return loss, grads, td

    def copy(self) -> "QNetwork":
        net = QNetwork.__new__(QNetwork)
        net.sizes = self.sizes
        net.params = [p.copy() for p in self.params]
        return net

    def load_params(self, other: "QNetwork"):
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def checksum(self) -> str:
        h = hashlib.sha256()
        for p in self.params:
            h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
        return h.hexdigest()

    def to_bytes(self) -> bytes:
        head = BLOB_MAGIC + struct.pack("<II", BLOB_VERSION, len(self.sizes))
        head += struct.pack(f"<{len(self.sizes)}I", *self.sizes)
        body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in self.params)
        return head + body

    @classmethod
    def from_bytes(cls, blob: bytes) -> "QNetwork":
        if blob[:4] != BLOB_MAGIC:
            raise CheckpointError("not a network blob")
        version, count = struct.unpack_from("<II", blob, 4)
        if version != BLOB_VERSION:
            raise CheckpointError(f"network blob version {version}, expected {BLOB_VERSION}")
        sizes = struct.unpack_from(f"<{count}I", blob, 12)
        net = cls(sizes, zero=True)
        offset = 12 + 4 * count
        for p in net.params:
            nbytes = p.size * 8
            if offset + nbytes > len(blob):
                raise CheckpointError("truncated network blob")
            p[...] = np.frombuffer(blob, dtype="<f8", count=p.size, offset=offset).reshape(p.shape)
            offset += nbytes
        if offset != len(blob):
            raise CheckpointError("trailing bytes in network blob")
        return net


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_by_global_norm(grads, bound):
    if bound is None:
        return grads
    norm = global_norm(grads)
    if norm <= bound or norm == 0.0:
        return grads
    scale = bound / norm
    return [g * scale for g in grads]


class Adam:
    """Adam with bias correction, optional global-norm clipping and linear LR decay."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 clip_norm=None, decay_steps=None, final_lr_fraction=0.0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.decay_steps = decay_steps
        self.final_lr_fraction = final_lr_fraction
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def current_lr(self) -> float:
        if not self.decay_steps:
            return self.lr
        frac = min(self.t / self.decay_steps, 1.0)
        return self.lr * (1.0 - (1.0 - self.final_lr_fraction) * frac)

    def step(self, params, grads):
        """Update ``params`` in place."""
        if len(grads) != len(params):
            raise ContractError("gradient/parameter count mismatch")
        grads = clip_by_global_norm(grads, self.clip_norm)
        lr = self.current_lr()
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def adam_step(net: QNetwork, grads, state: Adam) -> QNetwork:
    state.step(net.params, grads)
    return net


# ------------------------------------------------------------ action choice

def masked_argmax(q: np.ndarray, mask: np.ndarray) -> np.ndarray | int:
    """Argmax over legal entries, lowest index on ties; works on rows."""
    q = np.where(mask, q, -np.inf)
    return np.argmax(q, axis=-1)


def act_epsilon_greedy(q_or_net, x, mask, epsilon: float, rng: np.random.Generator) -> int:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ContractError("no legal action")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.choice(np.flatnonzero(mask)))
    q = q_or_net.forward(x) if isinstance(q_or_net, QNetwork) else np.asarray(q_or_net)
    return int(masked_argmax(q, mask))


def boltzmann(q, mask, temperature: float = 1.0, floor: float = PROB_FLOOR) -> np.ndarray:
    """Softmax of masked Q/temperature mixed with uniform-over-legal at weight ``floor``."""
    if temperature <= 0:
        raise ContractError("temperature must be positive")
    q = np.asarray(q, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    z = np.where(mask, q / temperature, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    p = e / e.sum(axis=-1, keepdims=True)
    uniform = mask / mask.sum(axis=-1, keepdims=True)
    return (1.0 - floor) * p + floor * uniform


def policy_distribution(net: QNetwork, x, mask, temperature: float = 1.0) -> np.ndarray:
    return boltzmann(net.forward(x), mask, temperature)


def kl_divergence(p, q) -> np.ndarray:
    """KL(p || q) along the last axis; terms with p = 0 contribute nothing."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return terms.sum(axis=-1)


# ------------------------------------------------------------------- replay

class Transition(NamedTuple):
    features: np.ndarray
    action: int
    reward: float
    next_features: np.ndarray
    next_mask: np.ndarray
    done: bool


class ReplayBuffer:
    """Ring buffer of transitions, optionally with proportional prioritization."""

    def __init__(self, capacity: int, feature_size: int, num_actions: int,
                 alpha: float | None = None, beta: float = 0.4):
        if capacity < 1:
            raise ConfigError("replay capacity must be positive")
        self.capacity = capacity
        self.alpha = alpha
        self.beta = beta
        self.x = np.zeros((capacity, feature_size))
        self.a = np.zeros(capacity, dtype=int)
        self.r = np.zeros(capacity)
        self.nx = np.zeros((capacity, feature_size))
        self.nmask = np.zeros((capacity, num_actions), dtype=bool)
        self.done = np.zeros(capacity, dtype=bool)
        self.priorities = np.zeros(capacity)
        self._max_priority = 1.0
        self._next = 0
        self._size = 0

    @property
    def prioritized(self) -> bool:
        return self.alpha is not None

    def __len__(self):
        return self._size

    def add(self, t: Transition):
        i = self._next
        self.x[i] = t.features
        self.a[i] = t.action
        self.r[i] = t.reward
        self.nx[i] = t.next_features
        self.nmask[i] = t.next_mask
        self.done[i] = t.done
        self.priorities[i] = self._max_priority
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sampling_probabilities(self) -> np.ndarray:
        n = self._size
        if not self.prioritized:
            return np.full(n, 1.0 / n)
        p = self.priorities[:n] ** self.alpha
        return p / p.sum()

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Returns (indices, importance weights)."""
        n = self._size
        if self.prioritized:
            probs = self.sampling_probabilities()
            idx = rng.choice(n, size=batch_size, p=probs)
            w = (n * probs[idx]) ** (-self.beta)
            w = w / w.max()
        else:
            idx = rng.integers(0, n, size=batch_size)
            w = np.ones(batch_size)
        return idx, w

    def update_priorities(self, idx, td_errors):
        pr = np.abs(np.asarray(td_errors)) + 1e-6
        self.priorities[idx] = pr
        self._max_priority = max(self._max_priority, float(pr.max()))


# ---------------------------------------------------------------------- DQN

@dataclass
class DqnHyper:
    hidden: tuple = (256, 256, 256)
    learning_rate: float = 5e-3
    gamma: float = 1.0
    epsilon: float = 0.05
    batch_size: int = 512
    buffer_size: int = 10_000
    target_update_every: int = 5
    soft_update: float = 1.0
    grad_clip: float | None = None
    per_alpha: float | None = None
    per_beta: float = 0.4
    lr_decay_steps: int | None = None
    train_every: int = 1
    min_buffer: int | None = None
    # listed in the hyperparameter tables without a definition; not wired
    num_inferences: int = 3
    extra: dict = field(default_factory=dict)

    def validate(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must be in [0, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must be in [0, 1]")
        if not 0.0 < self.soft_update <= 1.0:
            raise ConfigError("soft_update must be in (0, 1]")
        for name in ("batch_size", "buffer_size", "target_update_every", "train_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.per_alpha is not None and self.per_alpha < 0:
            raise ConfigError("per_alpha must be non-negative")
        if any(int(h) < 1 for h in self.hidden):
            raise ConfigError("hidden widths must be positive")
        return self

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d.pop("extra")
        return d


class DQNLearner:
    """Owns a Q-network, its target copy, Adam state and a replay buffer."""

    def __init__(self, feature_size: int, num_actions: int, hyper: DqnHyper,
                 rng: np.random.Generator, net: QNetwork | None = None,
                 learning_rate: float | None = None):
        self.hyper = hyper
        self.num_actions = num_actions
        sizes = (feature_size, *hyper.hidden, num_actions)
        self.net = net.copy() if net is not None else QNetwork(sizes, rng)
        if self.net.sizes[0] != feature_size or self.net.sizes[-1] != num_actions:
            raise ContractError("network shape does not match learner")
        self.target = self.net.copy()
        self.optimizer = Adam(self.net.params,
                              lr=hyper.learning_rate if learning_rate is None else learning_rate,
                              clip_norm=hyper.grad_clip, decay_steps=hyper.lr_decay_steps)
        self.buffer = ReplayBuffer(hyper.buffer_size, feature_size, num_actions,
                                   alpha=hyper.per_alpha, beta=hyper.per_beta)
        self.train_steps = 0
        self._adds = 0

    def q_values(self, x):
        return self.net.forward(x)

    def act(self, x, mask, rng, explore: bool = True) -> int:
        eps = self.hyper.epsilon if explore else 0.0
        return act_epsilon_greedy(self.net, x, mask, eps, rng)

    def add(self, t: Transition):
        self.buffer.add(t)
        self._adds += 1

    def ready(self) -> bool:
        need = self.hyper.min_buffer or self.hyper.batch_size
        return len(self.buffer) >= need

    def td_targets(self, idx) -> np.ndarray:
        buf = self.buffer
        q_next = self.target.forward(buf.nx[idx])
        q_next = np.where(buf.nmask[idx], q_next, -np.inf).max(axis=1)
        q_next = np.where(buf.done[idx], 0.0, q_next)
        return buf.r[idx] + self.hyper.gamma * q_next

    def train_step(self, rng) -> float | None:
        """One TD update; returns the loss, or ``None`` while the buffer is underfull."""
        if not self.ready():
            return None
        h = self.hyper
        idx, w = self.buffer.sample(h.batch_size, rng)
        targets = self.td_targets(idx)
        loss, grads, td = self.net.gradient(self.buffer.x[idx], self.buffer.a[idx], targets, w)
        self.optimizer.step(self.net.params, grads)
        if self.buffer.prioritized:
            self.buffer.update_priorities(idx, td)
        self.train_steps += 1
        if self.train_steps % h.target_update_every == 0:
            self.update_target()
        return loss

    def update_target(self):
        tau = self.hyper.soft_update
        if tau >= 1.0:
            self.target.load_params(self.net)
            return
        for t, p in zip(self.target.params, self.net.params):
            t *= 1.0 - tau
            t += tau * p

    def add_trajectory(self, steps, final_reward: float, rng, shaped=None) -> int:
        """Store one player's trajectory and run the due train steps.

        ``steps`` is a list of (features, mask, action); ``shaped`` an optional
        per-step reward list added to the terminal utility on the last step.
        Returns the number of train steps taken.
        """
        trained = 0
        for t in trajectory_transitions(steps, final_reward, self.num_actions, shaped):
            trained += self.observe(t, rng)
        return trained

    def observe(self, t: Transition, rng) -> int:
        """Store one transition and train if a step is due; returns steps taken."""
        self.add(t)
        if self._adds % self.hyper.train_every == 0 and self.train_step(rng) is not None:
            return 1
        return 0


def trajectory_transitions(steps, final_reward: float, num_actions: int, shaped=None):
    """Chain (features, mask, action) steps into transitions ending in a terminal one.

    The next-state mask of step k is the mask stored with step k + 1, so
    callers choose which action space it refers to.
    """
    n = len(steps)
    out = []
    for k, (x, _, a) in enumerate(steps):
        r = shaped[k] if shaped is not None else 0.0
        if k + 1 < n:
            nx, nmask, _ = steps[k + 1]
            out.append(Transition(x, a, r, nx, nmask, False))
        else:
            out.append(Transition(x, a, r + final_reward, np.zeros_like(x),
                                  np.zeros(num_actions, dtype=bool), True))
    return out
