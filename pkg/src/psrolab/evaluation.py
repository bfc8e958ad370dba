"""Exact and approximate exploitability of population mixtures.

The exact path flattens the game into a :class:`GameTree` once, evaluates
every policy on all information states of a player in one batch, reduces a
population mixture to a behavioral strategy by own-reach weighting and then
computes best-response values by a memoized tree traversal.
"""

from __future__ import annotations

import sys
import weakref
from dataclasses import dataclass, field

import numpy as np

from psrolab.errors import CapacityError, ContractError
from psrolab.games import CHANCE, TERMINAL, Game
from psrolab.nn import DqnHyper
from psrolab.oracle import snapshot, train_response
from psrolab.rollout import play_episode, policy_actor, sample_opponent

NODE_CAP = 10_000_000


class GameTree:
    """Preorder-flattened game tree with per-player information-state tables."""

    def __init__(self, game: Game, node_cap: int = NODE_CAP):
        self.game = game
        self.actor = []
        self.children = []      # dict action -> child index
        self.probs = []         # dict action -> chance probability (chance nodes)
        self.u0 = []            # player-0 return at terminals
        self.info = []          # infoset index of the acting player
        self.keys = ([], [])
        self.features = ([], [])
        self.masks = ([], [])
        self.infoset_nodes = ([], [])
        key_index = ({}, {})

        stack = [(game.new_initial_state(), -1, None)]
        while stack:
            state, parent, action = stack.pop()
            n = len(self.actor)
            if n >= node_cap:
                raise CapacityError(f"{game!r} exceeds the exact-evaluation node cap {node_cap}")
            p = state.current_player()
            self.actor.append(p)
            self.children.append({})
            self.probs.append(None)
            self.u0.append(0.0)
            self.info.append(-1)
            if parent >= 0:
                self.children[parent][action] = n
            if p == TERMINAL:
                self.u0[n] = state.returns()[0]
                continue
            if p == CHANCE:
                outcomes = state.chance_outcomes()
                self.probs[n] = dict(outcomes)
                actions = [a for a, _ in outcomes]
            else:
                key = state.information_state_key(p)
                idx = key_index[p].get(key)
                if idx is None:
                    idx = key_index[p][key] = len(self.keys[p])
                    self.keys[p].append(key)
                    self.features[p].append(state.encode(p))
                    self.masks[p].append(state.legal_mask())
                    self.infoset_nodes[p].append([])
                self.info[n] = idx
                self.infoset_nodes[p][idx].append(n)
                actions = state.legal_actions()
            for a in reversed(actions):
                stack.append((state.apply_action(a), n, a))

        self.features = tuple(np.array(f).reshape(len(f), game.feature_size) for f in self.features)
        self.masks = tuple(np.array(m, dtype=bool).reshape(len(m), game.num_actions)
                           for m in self.masks)
        self.key_index = key_index
        self._tables = weakref.WeakKeyDictionary()

    def __len__(self):
        return len(self.actor)

    def num_infosets(self, player: int) -> int:
        return len(self.keys[player])

    def uniform(self, player: int) -> np.ndarray:
        m = self.masks[player].astype(float)
        return m / m.sum(axis=1, keepdims=True)

    def policy_table(self, policy, player: int, smooth: bool = False,
                     temperature: float = 1.0) -> np.ndarray:
        """(num_infosets x num_actions) action probabilities of ``policy``."""
        per_policy = self._tables.setdefault(policy, {})
        k = (player, smooth, temperature)
        if k not in per_policy:
            X, M = self.features[player], self.masks[player]
            if len(X) == 0:
                t = np.zeros((0, self.game.num_actions))
            elif smooth:
                t = policy.distribution(X, M, temperature)
            else:
                t = policy.deploy(X, M)
            per_policy[k] = t
        return per_policy[k]


_TREES = {}


def game_tree(game: Game, node_cap: int = NODE_CAP) -> GameTree:
    """Cached :class:`GameTree` per game object."""
    key = id(game)
    entry = _TREES.get(key)
    if entry is None or entry[0] is not game:
        entry = _TREES[key] = (game, GameTree(game, node_cap))
    return entry[1]


def _require_perfect_recall(game):
    if not getattr(game, "perfect_recall", True):
        raise ContractError(f"{game!r} has imperfect recall; use approx_exploitability")


@dataclass
class MixedProfile:
    """Per-player population policies with meta-strategy weights."""

    policies: list
    weights: list

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        for pols, w in zip(self.policies, self.weights):
            if len(pols) != len(w):
                raise ContractError("weights and population size differ")
            if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
                raise ContractError("weights are not a probability vector")


def aggregate_behavioral(tree: GameTree, policies, weights, player: int,
                         smooth: bool = False, temperature: float = 1.0) -> np.ndarray:
    """Behavioral strategy equivalent to the mixture ``sum_k weights[k] * policies[k]``.

    At every information state the action distribution is the mixture of the
    members' distributions weighted by ``weights[k] * reach_k``, where
    ``reach_k`` is the product of member k's own action probabilities on the
    way there.  Unreached information states get the uniform distribution.
    """
    _require_perfect_recall(tree.game)
    weights = np.asarray(weights, dtype=float)
    tables = np.stack([tree.policy_table(p, player, smooth, temperature) for p in policies])
    n_info = tree.num_infosets(player)
    out = tree.uniform(player).copy()
    done = np.zeros(n_info, dtype=bool)
    reach = {0: weights.copy()}
    actor, children, info = tree.actor, tree.children, tree.info
    for n in range(len(tree)):
        r = reach.pop(n)
        a = actor[n]
        if a == TERMINAL:
            continue
        if a == player:
            i = info[n]
            if not done[i]:
                s = r.sum()
                if s > 0:
                    out[i] = (r @ tables[:, i, :]) / s
                done[i] = True
            for act, c in children[n].items():
                reach[c] = r * tables[:, i, act]
        else:
            for c in children[n].values():
                reach[c] = r
    return out


def _opponent_reach(tree: GameTree, strategy: np.ndarray, player: int) -> np.ndarray:
    opp = 1 - player
    reach = np.zeros(len(tree))
    reach[0] = 1.0
    for n in range(len(tree)):
        a = tree.actor[n]
        r = reach[n]
        if a == TERMINAL:
            continue
        if a == CHANCE:
            for act, c in tree.children[n].items():
                reach[c] = r * tree.probs[n][act]
        elif a == opp:
            row = strategy[tree.info[n]]
            for act, c in tree.children[n].items():
                reach[c] = r * row[act]
        else:
            for c in tree.children[n].values():
                reach[c] = r
    return reach


def best_response_value(tree: GameTree, opponent_strategy: np.ndarray, player: int):
    """Exact best-response value for ``player`` and the best response itself.

    ``opponent_strategy`` is the behavioral strategy of the other player as a
    (num_infosets x num_actions) array on ``tree``.  Returns
    ``(value, br_table)`` with ``br_table`` one-hot per information state.
    """
    _require_perfect_recall(tree.game)
    opp = 1 - player
    sign = 1.0 if player == 0 else -1.0
    reach = _opponent_reach(tree, opponent_strategy, player)
    value = np.full(len(tree), np.nan)
    n_info = tree.num_infosets(player)
    best = np.full(n_info, -1)
    actor, children, info = tree.actor, tree.children, tree.info
    masks = tree.masks[player]

    def best_action(i):
        if best[i] < 0:
            q = np.zeros(tree.game.num_actions)
            for h in tree.infoset_nodes[player][i]:
                w = reach[h]
                for act, c in children[h].items():
                    q[act] += w * node_value(c)
            best[i] = int(np.argmax(np.where(masks[i], q, -np.inf)))
        return best[i]

    def node_value(n):
        v = value[n]
        if v == v:
            return v
        a = actor[n]
        if a == TERMINAL:
            v = sign * tree.u0[n]
        elif a == player:
            v = node_value(children[n][best_action(info[n])])
        elif a == CHANCE:
            v = sum(p * node_value(children[n][act]) for act, p in tree.probs[n].items())
        else:
            row = opponent_strategy[info[n]]
            v = sum(row[act] * node_value(c) for act, c in children[n].items())
        value[n] = v
        return v

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * tree.game.max_depth + 1000))
    try:
        root = node_value(0)
        for i in range(n_info):
            best_action(i)
    finally:
        sys.setrecursionlimit(limit)
    table = np.zeros((n_info, tree.game.num_actions))
    table[np.arange(n_info), best] = 1.0
    return float(root), table


def expected_value(tree: GameTree, strategies) -> float:
    """Player-0 expected return when both players follow behavioral ``strategies``."""
    value = np.zeros(len(tree))
    for n in range(len(tree) - 1, -1, -1):
        a = tree.actor[n]
        if a == TERMINAL:
            value[n] = tree.u0[n]
        elif a == CHANCE:
            value[n] = sum(p * value[tree.children[n][act]] for act, p in tree.probs[n].items())
        else:
            row = strategies[a][tree.info[n]]
            value[n] = sum(row[act] * value[c] for act, c in tree.children[n].items())
    return float(value[0])


def policy_value(tree: GameTree, policy0, policy1) -> float:
    """Exact player-0 expected return of two deployed policies."""
    return expected_value(tree, [tree.policy_table(policy0, 0), tree.policy_table(policy1, 1)])


@dataclass
class ExploitabilityReport:
    value: float
    method: str
    br_values: tuple = field(default_factory=tuple)

    def row(self) -> dict:
        return {"method": self.method, "exploitability": self.value,
                "br_value_p0": self.br_values[0] if self.br_values else "",
                "br_value_p1": self.br_values[1] if self.br_values else ""}


def exploitability(game: Game, profile: MixedProfile, smooth: bool = False,
                   temperature: float = 1.0, tree: GameTree | None = None) -> ExploitabilityReport:
    """Sum over players of the exact best-response value against the other's mixture."""
    _require_perfect_recall(game)
    tree = tree if tree is not None else game_tree(game)
    strategies = [aggregate_behavioral(tree, profile.policies[p], profile.weights[p], p,
                                       smooth, temperature) for p in (0, 1)]
    br = tuple(best_response_value(tree, strategies[1 - p], p)[0] for p in (0, 1))
    value = float(sum(br))
    # rounding can leave an equilibrium a hair below zero
    if -1e-9 < value < 0.0:
        value = 0.0
    return ExploitabilityReport(value, "exact", br)


def head_to_head(game: Game, policy, player: int, opponents, weights, episodes: int,
                 rng: np.random.Generator) -> tuple[float, float]:
    """Mean and standard error of ``player``'s return against the weighted opponents."""
    if episodes < 1:
        raise ContractError("episodes must be >= 1")
    actors = [None, None]
    actors[player] = policy_actor(policy)
    opp_actors = [policy_actor(p) for p in opponents]
    values = np.empty(episodes)
    for e in range(episodes):
        actors[1 - player] = opp_actors[sample_opponent(weights, rng)]
        ret, _ = play_episode(game, actors, rng, record=(False, False))
        values[e] = ret[player]
    stderr = float(values.std(ddof=1) / np.sqrt(episodes)) if episodes > 1 else 0.0
    return float(values.mean()), stderr


def approx_exploitability(game: Game, profile: MixedProfile, hyper: DqnHyper, episodes: int,
                          rng: np.random.Generator, eval_episodes: int = 1000) -> ExploitabilityReport:
    """Train one DQN exploiter per player against the frozen profile.

    The reported value is the sum of the exploiters' mean greedy returns over
    ``eval_episodes`` episodes each.
    """
    values = []
    for p in (0, 1):
        learner, _ = train_response(game, p, profile.policies[1 - p], profile.weights[1 - p],
                                    hyper, episodes, rng)
        mean, _ = head_to_head(game, snapshot(learner), p, profile.policies[1 - p],
                               profile.weights[1 - p], eval_episodes, rng)
        values.append(mean)
    return ExploitabilityReport(float(sum(values)), "approximate", tuple(values))
