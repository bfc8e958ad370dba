"""Slow, independent reference computations used to cross-check the fast paths.

Nothing here shares code with :mod:`psrolab.evaluation` or the LP meta
solver: values come from plain recursion over game states and from brute
force enumeration.
"""

from __future__ import annotations

import itertools

import numpy as np

from psrolab.games import CHANCE, TERMINAL


def support_enumeration(M, tol: float = 1e-9):
    """All equilibria of a small zero-sum matrix game by equal-size support enumeration.

    Returns ``(value, row, col)`` for the first equilibrium found.  Zero-sum
    games have a unique value, so any equilibrium gives it.
    """
    M = np.asarray(M, dtype=float)
    m, n = M.shape
    for k in range(1, min(m, n) + 1):
        for rs in itertools.combinations(range(m), k):
            for cs in itertools.combinations(range(n), k):
                sol = _solve_support(M, rs, cs)
                if sol is None:
                    continue
                x, y, v = sol
                if (M @ y).max() <= v + tol and (x @ M).min() >= v - tol:
                    return v, x, y
    raise RuntimeError("no equilibrium found")


def _solve_support(M, rs, cs):
    k = len(rs)
    sub = M[np.ix_(rs, cs)]
    # column mix y equalizes the row payoffs on rs; row mix x equalizes on cs
    a = np.zeros((k + 1, k + 1))
    a[:k, :k] = sub
    a[:k, k] = -1.0
    a[k, :k] = 1.0
    b = np.zeros(k + 1)
    b[k] = 1.0
    a2 = np.zeros((k + 1, k + 1))
    a2[:k, :k] = sub.T
    a2[:k, k] = -1.0
    a2[k, :k] = 1.0
    try:
        ys = np.linalg.solve(a, b)
        xs = np.linalg.solve(a2, b)
    except np.linalg.LinAlgError:
        return None
    if ys[:k].min() < -1e-12 or xs[:k].min() < -1e-12:
        return None
    x = np.zeros(M.shape[0])
    y = np.zeros(M.shape[1])
    x[list(rs)] = np.clip(xs[:k], 0, None)
    y[list(cs)] = np.clip(ys[:k], 0, None)
    return x, y, float(x @ M @ y)


def expected_value(state, strategies) -> float:
    """Player-0 expected return by direct recursion.

    ``strategies[p]`` maps an information-state key to a probability vector;
    missing keys play uniformly over legal actions.
    """
    p = state.current_player()
    if p == TERMINAL:
        return float(state.returns()[0])
    if p == CHANCE:
        return sum(prob * expected_value(state.apply_action(a), strategies)
                   for a, prob in state.chance_outcomes())
    legal = state.legal_actions()
    probs = strategies[p].get(state.information_state_key(p))
    total = 0.0
    for a in legal:
        w = 1.0 / len(legal) if probs is None else probs[a]
        if w:
            total += w * expected_value(state.apply_action(a), strategies)
    return total


def infosets(game, player: int) -> dict:
    """Information-state key -> legal actions for every reachable infoset of ``player``."""
    out = {}
    stack = [game.new_initial_state()]
    while stack:
        s = stack.pop()
        p = s.current_player()
        if p == TERMINAL:
            continue
        if p == CHANCE:
            stack.extend(s.apply_action(a) for a, _ in s.chance_outcomes())
            continue
        if p == player:
            out.setdefault(s.information_state_key(p), tuple(s.legal_actions()))
        stack.extend(s.apply_action(a) for a in s.legal_actions())
    return out


def pure_strategies(game, player: int):
    """Every deterministic strategy of ``player`` as a key -> one-hot map."""
    sets = infosets(game, player)
    keys = sorted(sets)
    for choice in itertools.product(*(sets[k] for k in keys)):
        strat = {}
        for k, a in zip(keys, choice):
            v = np.zeros(game.num_actions)
            v[a] = 1.0
            strat[k] = v
        yield strat


def best_response_by_enumeration(game, opponent, player: int) -> float:
    """max over every pure strategy of ``player`` of its value against ``opponent``.

    ``opponent`` is one strategy map or a list of ``(weight, strategy)``
    pairs; a mixture is handled by linearity of the expected value, without
    reducing it to a behavioral strategy.
    """
    mixture = [(1.0, opponent)] if isinstance(opponent, dict) else list(opponent)
    sign = 1.0 if player == 0 else -1.0
    root = game.new_initial_state()
    best = -np.inf
    for strat in pure_strategies(game, player):
        value = 0.0
        for w, opp in mixture:
            strategies = [None, None]
            strategies[player] = strat
            strategies[1 - player] = opp
            value += w * sign * expected_value(root, strategies)
        best = max(best, value)
    return float(best)


def exploitability_by_enumeration(game, strategies) -> float:
    """Sum of both players' enumerated best-response values.

    ``strategies[p]`` is a strategy map or a ``(weight, strategy)`` list.
    """
    return (best_response_by_enumeration(game, strategies[1], 0)
            + best_response_by_enumeration(game, strategies[0], 1))


def random_behavioral(game, player: int, rng) -> dict:
    """Random strategy over ``player``'s infosets with Dirichlet(1) probabilities."""
    out = {}
    for key, legal in infosets(game, player).items():
        v = np.zeros(game.num_actions)
        v[list(legal)] = rng.dirichlet(np.ones(len(legal)))
        out[key] = v
    return out
