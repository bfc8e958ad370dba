"""DQN response training against a fixed mixture of opponent policies."""

from __future__ import annotations

import numpy as np

from psrolab.nn import DQNLearner, DqnHyper, boltzmann, kl_divergence
from psrolab.policies import QPolicy
from psrolab.population import StateBuffer
from psrolab.rollout import play_episode, policy_actor, sample_opponent

STATE_BUFFER_CAP = 10_000


def snapshot(learner: DQNLearner) -> QPolicy:
    """Frozen greedy policy of the learner's current network."""
    return QPolicy(learner.net.copy())


def min_kl_to_population(dist, X, masks, members, temperature=1.0) -> np.ndarray:
    """Per-state min over members of KL(dist(s) || member(s))."""
    best = None
    for m in members:
        kl = kl_divergence(dist, m.cached_distribution(temperature)(X, masks))
        best = kl if best is None else np.minimum(best, kl)
    return best


def diversity_shaping(learner: DQNLearner, members, weight: float, temperature: float = 1.0):
    """Per-step reward ``weight * min_k KL(learner(s) || pi_k(s))``."""
    def shape(steps):
        if weight == 0.0 or not members:
            return [0.0] * len(steps)
        X = np.array([s[0] for s in steps])
        masks = np.array([s[1] for s in steps])
        own = learner.net.forward(X)
        dist = boltzmann(own, masks, temperature)
        return list(weight * min_kl_to_population(dist, X, masks, members, temperature))
    return shape


def train_response(game, player: int, opponents, weights, hyper: DqnHyper, episodes: int,
                   rng: np.random.Generator, shaping=None, learner: DQNLearner | None = None,
                   state_cap: int = STATE_BUFFER_CAP, explore: bool = True):
    """Train a DQN learner as ``player`` for ``episodes`` episodes.

    Each episode draws one opponent from ``weights``; opponents play their
    deployed (greedy) policy.  ``shaping(steps)`` may return per-step rewards
    added on top of the terminal utility.  Returns ``(learner, states)``.
    """
    if learner is None:
        learner = DQNLearner(game.feature_size, game.num_actions, hyper, rng)
    states = StateBuffer(state_cap, game.feature_size, game.num_actions)
    opp_actors = [policy_actor(p) for p in opponents]

    def me(state, x, mask, r):
        return learner.act(x, mask, r, explore=explore)

    actors = [None, None]
    actors[player] = me
    record = (player == 0, player == 1)
    for _ in range(episodes):
        actors[1 - player] = opp_actors[sample_opponent(weights, rng)]
        ret, traj = play_episode(game, actors, rng, record=record)
        steps = traj[player]
        if not steps:
            continue
        shaped = shaping(steps) if shaping is not None else None
        learner.add_trajectory(steps, ret[player], rng, shaped)
        states.extend(steps, rng)
    return learner, states
