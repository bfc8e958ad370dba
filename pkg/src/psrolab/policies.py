"""Policies over (feature vector, legal mask) pairs.

A policy answers two questions for a batch of decision points:

* ``deploy(X, masks)``: the action distribution it actually plays.  Q-network
  policies play greedily, so this is one-hot.
* ``distribution(X, masks, temperature)``: a smoothed distribution used for
  KL-based diversity and imitation terms.  For Q-network policies this is a
  Boltzmann distribution over Q/temperature with a small uniform floor.
"""

from __future__ import annotations

import numpy as np

from psrolab import games
from psrolab.nn import PROB_FLOOR, QNetwork, boltzmann, masked_argmax


def _batch(X, masks):
    return np.atleast_2d(np.asarray(X, dtype=float)), np.atleast_2d(np.asarray(masks, dtype=bool))


def one_hot_argmax(q, masks) -> np.ndarray:
    idx = masked_argmax(q, masks)
    out = np.zeros(masks.shape)
    out[np.arange(len(idx)), idx] = 1.0
    return out


def uniform_over(masks) -> np.ndarray:
    masks = np.asarray(masks, dtype=float)
    return masks / masks.sum(axis=-1, keepdims=True)


class Policy:
    kind = "policy"

    def __init__(self, num_actions: int):
        self.num_actions = num_actions

    def deploy(self, X, masks) -> np.ndarray:
        raise NotImplementedError

    def distribution(self, X, masks, temperature: float = 1.0) -> np.ndarray:
        return self.deploy(X, masks)

    def act(self, x, mask, rng: np.random.Generator) -> int:
        p = self.deploy(x, mask)[0]
        best = int(np.argmax(p))
        if p[best] >= 1.0:
            return best
        return int(rng.choice(len(p), p=p))

    def __repr__(self):
        return f"{type(self).__name__}()"


class UniformPolicy(Policy):
    """Uniform over legal actions, both deployed and smoothed."""

    kind = "uniform"

    def deploy(self, X, masks):
        _, masks = _batch(X, masks)
        return uniform_over(masks)


class QPolicy(Policy):
    """Greedy policy of a Q-network."""

    kind = "dqn"

    def __init__(self, net: QNetwork):
        super().__init__(net.output_size)
        self.net = net

    def q_values(self, X):
        return self.net.forward(np.atleast_2d(X))

    def deploy(self, X, masks):
        X, masks = _batch(X, masks)
        return one_hot_argmax(self.net.forward(X), masks)

    def distribution(self, X, masks, temperature=1.0):
        X, masks = _batch(X, masks)
        return boltzmann(self.net.forward(X), masks, temperature)

    def act(self, x, mask, rng=None):
        q = self.net.forward(x)
        return int(masked_argmax(q, np.asarray(mask, dtype=bool)))


class TabularPolicy(Policy):
    """Explicit distributions keyed by feature bytes; missing entries are uniform.

    Distributions are renormalized over the legal actions of each query.
    """

    kind = "tabular"

    def __init__(self, num_actions: int, table: dict | None = None):
        super().__init__(num_actions)
        self.table = {} if table is None else dict(table)

    @staticmethod
    def key(x) -> bytes:
        return np.asarray(x, dtype=float).tobytes()

    def set(self, x, probs):
        self.table[self.key(x)] = np.asarray(probs, dtype=float)

    def deploy(self, X, masks):
        X, masks = _batch(X, masks)
        out = uniform_over(masks)
        for i, x in enumerate(X):
            p = self.table.get(self.key(x))
            if p is not None:
                p = np.where(masks[i], p, 0.0)
                s = p.sum()
                if s > 0:
                    out[i] = p / s
        return out


class FunctionPolicy(Policy):
    """Deterministic policy given by ``fn(x, mask) -> action``."""

    kind = "function"

    def __init__(self, num_actions: int, fn, name: str = "function"):
        super().__init__(num_actions)
        self.fn = fn
        self.name = name

    def deploy(self, X, masks):
        X, masks = _batch(X, masks)
        out = np.zeros(masks.shape)
        for i, (x, m) in enumerate(zip(X, masks)):
            out[i, self.fn(x, m)] = 1.0
        return out

    def distribution(self, X, masks, temperature=1.0):
        _, masks = _batch(X, masks)
        return (1.0 - PROB_FLOOR) * self.deploy(X, masks) + PROB_FLOOR * uniform_over(masks)

    def act(self, x, mask, rng=None):
        return int(self.fn(np.asarray(x), np.asarray(mask, dtype=bool)))

    def __repr__(self):
        return f"FunctionPolicy({self.name})"


# ------------------------------------------------------------ maze scripts

U, D, L, R = games.UP, games.DOWN, games.LEFT, games.RIGHT

# Human routes as cell -> move.  pi2 then pi1 from the switch cell reaches
# the shelter; either route followed alone is caught by the chasing monster.
MAZE_ROUTES = {
    "pi1": {(4, 3): U, (3, 3): R, (3, 4): R, (3, 5): R, (3, 6): U, (2, 6): U, (1, 6): L},
    "pi2": {(4, 3): R, (4, 4): R, (4, 5): R, (4, 6): U, (3, 6): L, (3, 5): U, (2, 5): U},
    "pi3": {(4, 3): U, (3, 3): U, (2, 3): R, (2, 4): R, (2, 5): U},
}


def _manhattan(a, b):
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def _toward(cell, goal, mask):
    best, best_d = None, None
    for a in (U, D, L, R):
        if mask[a]:
            d = _manhattan(games.maze_step(cell, a), goal)
            if best_d is None or d < best_d:
                best, best_d = a, d
    return best


def monster_chase_action(monster, human) -> int:
    """Greedy chase: minimize Manhattan distance, directions tried up, down, left, right.

    A two-cell move is used only when it is strictly closer than the one-cell
    move in the same direction.
    """
    best, best_d = None, None
    for a in (U, D, L, R):
        one = games.maze_step(monster, a)
        if not games._in_grid(one):
            continue
        cand, d = a, _manhattan(one, human)
        two = games.maze_step(monster, a + 4)
        if games._in_grid(two) and _manhattan(two, human) < d:
            cand, d = a + 4, _manhattan(two, human)
        if best_d is None or d < best_d:
            best, best_d = cand, d
    return best


def maze_scripted_policy(name: str, shelter=games.MAZE_SHELTER) -> FunctionPolicy:
    """Scripted maze policies ``pi1``, ``pi2``, ``pi3`` (human) or ``monster``.

    Human routes fall back to a shelter-seeking move off their route.
    """
    if name == "monster":
        def chase(x, mask):
            human, monster = games.decode_maze_features(x)
            return monster_chase_action(monster, human)
        return FunctionPolicy(games.Maze.num_actions, chase, "monster")
    if name not in MAZE_ROUTES:
        raise KeyError(f"unknown maze policy {name!r}")
    route = MAZE_ROUTES[name]

    def follow(x, mask):
        human, _ = games.decode_maze_features(x)
        a = route.get(human)
        if a is None or not mask[a]:
            a = _toward(human, shelter, mask)
        return a

    return FunctionPolicy(games.Maze.num_actions, follow, name)


def maze_switch_policy(first: str = "pi2", second: str = "pi1",
                       switch=games.MAZE_SWITCH_CELL) -> FunctionPolicy:
    """Follow ``first`` until the switch cell, then ``second`` from there on."""
    a, b = maze_scripted_policy(first), maze_scripted_policy(second)
    after = _route_from(MAZE_ROUTES[second], switch)

    def play(x, mask):
        human, _ = games.decode_maze_features(x)
        return (b if human in after else a).fn(x, mask)

    return FunctionPolicy(games.Maze.num_actions, play, f"{first}->{second}")


def _route_from(route, start):
    """Cells visited by ``route`` from ``start`` onward."""
    cells, cell = set(), start
    while cell in route and cell not in cells:
        cells.add(cell)
        cell = games.maze_step(cell, route[cell])
    return cells
