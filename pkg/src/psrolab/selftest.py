"""Fast invariant checks run by ``psrolab selftest``.

Each check returns ``None`` on success or raises with a message.  Fault
injection (``faults={"payoff"}``) corrupts the payoff convention so the
zero-sum check can be seen to fail.
"""

from __future__ import annotations

import contextlib
import time
from typing import NamedTuple

import numpy as np

from psrolab import games, oracles
from psrolab.conflux import ConfluxConfig, RoutingPolicy, train_routing
from psrolab.evaluation import GameTree, MixedProfile, exploitability
from psrolab.games import CHANCE, TERMINAL, load_game
from psrolab.meta import matrix_exploitability, solve_meta_nash
from psrolab.nn import DqnHyper, QNetwork
from psrolab.policies import (TabularPolicy, UniformPolicy, maze_scripted_policy,
                              maze_switch_policy)
from psrolab.rollout import mean_returns

FAULTS = ("payoff",)


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str
    seconds: float


@contextlib.contextmanager
def injected(faults):
    """Temporarily corrupt library behavior for fault-injection runs."""
    original = games.State.returns
    if "payoff" in faults:
        def corrupted(self):
            u = original(self)
            return (u[0], u[0])
        games.State.returns = corrupted
    try:
        yield
    finally:
        games.State.returns = original


def _walk(game):
    stack = [game.new_initial_state()]
    while stack:
        s = stack.pop()
        yield s
        p = s.current_player()
        if p == TERMINAL:
            continue
        actions = [a for a, _ in s.chance_outcomes()] if p == CHANCE else s.legal_actions()
        stack.extend(s.apply_action(a) for a in actions)


SMALL_GAMES = ("kuhn", "leduc", "liars_dice")


def check_zero_sum(seed):
    for gid in SMALL_GAMES + ("goofspiel",):
        game = load_game(gid, num_cards=3) if gid == "goofspiel" else load_game(gid)
        for s in _walk(game):
            if s.current_player() == TERMINAL:
                u = s.returns()
                if u[0] + u[1] != 0:
                    return f"{gid}: returns {u} do not sum to zero"
                if abs(u[0]) > game.max_utility:
                    return f"{gid}: |return| {abs(u[0])} above max {game.max_utility}"
    return None


def check_chance_normalization(seed):
    for gid in SMALL_GAMES:
        for s in _walk(load_game(gid)):
            if s.current_player() == CHANCE:
                total = sum(p for _, p in s.chance_outcomes())
                if abs(total - 1.0) > 1e-9:
                    return f"{gid}: chance probabilities sum to {total}"
    return None


def check_perfect_recall(seed):
    for gid in ("kuhn", "leduc"):
        seen = {}
        for s in _walk(load_game(gid)):
            p = s.current_player()
            if p < 0:
                continue
            key = s.information_state_key(p)
            own = tuple((a if actor == p else None) for actor, a in s.history
                        if actor == p or actor == CHANCE)
            if seen.setdefault(key, own) != own:
                return f"{gid}: key {key!r} covers two different own histories"
    return None


def check_gradients(seed):
    rng = np.random.default_rng(seed)
    for trial in range(5):
        net = QNetwork((2, 8, 3), rng)
        x = rng.normal(size=(4, 2))
        acts = rng.integers(0, 3, size=4)
        targets = rng.normal(size=4)
        _, grads, _ = net.gradient(x, acts, targets)
        for p, g in zip(net.params, grads):
            flat = p.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + 1e-5
                up = net.gradient(x, acts, targets)[0]
                flat[i] = old - 1e-5
                down = net.gradient(x, acts, targets)[0]
                flat[i] = old
                fd = (up - down) / 2e-5
                an = g.reshape(-1)[i]
                if abs(fd - an) > 1e-4 * max(abs(fd), abs(an), 1e-6):
                    return f"trial {trial}: analytic {an} vs finite difference {fd}"
    return None


def check_meta_nash(seed):
    rng = np.random.default_rng(seed)
    for _ in range(30):
        m, n = rng.integers(1, 5, size=2)
        M = rng.uniform(-1, 1, size=(m, n))
        nash = solve_meta_nash(M)
        if matrix_exploitability(M, nash.row, nash.col) > 1e-6:
            return f"gap {nash.gap} on a {m}x{n} matrix"
        v, _, _ = oracles.support_enumeration(M)
        if abs(v - nash.value) > 1e-5:
            return f"value {nash.value} vs support enumeration {v}"
    return None


def tabular_from_keys(game, player: int, strategy: dict) -> TabularPolicy:
    """TabularPolicy (feature keyed) equal to an information-key strategy map."""
    pol = TabularPolicy(game.num_actions)
    for s in _walk(game):
        if s.current_player() == player:
            probs = strategy.get(s.information_state_key(player))
            if probs is not None:
                pol.set(s.encode(player), probs)
    return pol


def check_kuhn_enumeration(seed):
    game = load_game("kuhn")
    tree = GameTree(game)
    rng = np.random.default_rng(seed)
    for trial in range(3):
        strat = [oracles.random_behavioral(game, p, rng) for p in (0, 1)]
        pols = [[tabular_from_keys(game, p, strat[p])] for p in (0, 1)]
        exact = exploitability(game, MixedProfile(pols, [[1.0], [1.0]]), tree=tree).value
        ref = oracles.exploitability_by_enumeration(game, strat)
        if abs(exact - ref) > 1e-9:
            return f"trial {trial}: tree {exact} vs enumeration {ref}"
    uniform = MixedProfile([[UniformPolicy(2)], [UniformPolicy(2)]], [[1.0], [1.0]])
    if abs(exploitability(game, uniform, tree=tree).value - 11 / 12) > 1e-9:
        return "uniform Kuhn exploitability is not 11/12"
    return None


def check_maze_fixture(seed):
    game = load_game("maze")
    monster = maze_scripted_policy("monster")
    rng = np.random.default_rng(seed)
    for name in ("pi1", "pi2"):
        if mean_returns(game, [maze_scripted_policy(name), monster], 1, rng)[0] != -1.0:
            return f"{name} alone is not captured"
    if mean_returns(game, [maze_switch_policy(), monster], 1, rng)[0] != 1.0:
        return "pi2 -> pi1 switch does not reach the shelter"
    hyper = DqnHyper(hidden=(32, 32), learning_rate=1e-3, epsilon=0.1, batch_size=64,
                     buffer_size=5000, target_update_every=50)
    subs = [maze_scripted_policy("pi1"), maze_scripted_policy("pi2")]
    routing = RoutingPolicy.from_population(subs, [0, 1], hyper.hidden, rng, game.feature_size)
    for _ in range(10):
        train_routing(game, 0, routing, [monster], [1.0], hyper,
                      ConfluxConfig(exploiter_weight=0.0), 200, rng)
        if mean_returns(game, [routing, monster], 1, rng)[0] == 1.0:
            return None
    return "router over {pi1, pi2} does not reach the shelter"


CHECKS = {
    "zero_sum": check_zero_sum,
    "chance_normalization": check_chance_normalization,
    "perfect_recall": check_perfect_recall,
    "gradient_check": check_gradients,
    "meta_nash_oracle": check_meta_nash,
    "kuhn_enumeration": check_kuhn_enumeration,
    "maze_fixture": check_maze_fixture,
}


def run_selftest(seed: int = 0, faults=(), names=None) -> list:
    results = []
    with injected(set(faults)):
        for name, fn in CHECKS.items():
            if names and name not in names:
                continue
            t = time.perf_counter()
            try:
                problem = fn(seed)
            except Exception as exc:  # a crash is a failed check, reported by name
                problem = f"{type(exc).__name__}: {exc}"
            results.append(CheckResult(name, problem is None, problem or "",
                                       time.perf_counter() - t))
    return results
