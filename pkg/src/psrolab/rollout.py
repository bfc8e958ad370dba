"""Episode simulation shared by oracles, evaluation and matrix filling."""

from __future__ import annotations

import numpy as np

from psrolab.games import CHANCE, TERMINAL, sample_chance


def policy_actor(policy):
    """Wrap a policy as an actor ``(state, x, mask, rng) -> action``."""
    def actor(state, x, mask, rng):
        return policy.act(x, mask, rng)
    return actor


def play_episode(game, actors, rng: np.random.Generator, record=(True, True)):
    """Play one episode.

    ``actors[p]`` is called as ``actor(state, features, mask, rng)``.  Returns
    ``(returns, trajectories)`` where ``trajectories[p]`` lists the
    ``(features, mask, action)`` triples of player ``p``'s decisions.
    """
    state = game.new_initial_state()
    traj = ([], [])
    while True:
        p = state.current_player()
        if p == TERMINAL:
            return state.returns(), traj
        if p == CHANCE:
            action = sample_chance(state, rng)
        else:
            x = state.encode(p)
            mask = state.legal_mask()
            action = actors[p](state, x, mask, rng)
            if record[p]:
                traj[p].append((x, mask, action))
        state = state.apply_action(action)


def sample_opponent(weights, rng) -> int:
    weights = np.asarray(weights, dtype=float)
    if len(weights) == 1:
        return 0
    return int(rng.choice(len(weights), p=weights / weights.sum()))


def mean_returns(game, policies, episodes: int, rng) -> tuple[float, float]:
    """Monte-Carlo mean and standard error of player 0's return."""
    actors = [policy_actor(p) for p in policies]
    values = np.empty(episodes)
    for e in range(episodes):
        ret, _ = play_episode(game, actors, rng, record=(False, False))
        values[e] = ret[0]
    stderr = values.std(ddof=1) / np.sqrt(episodes) if episodes > 1 else 0.0
    return float(values.mean()), float(stderr)
