"""Sub-policy selection, routing-policy training and distillation.

A routing policy holds a router Q-network over sub-policy indices plus
copies of the selected population policies.  At every decision point the
router picks a sub-policy and that sub-policy picks the environment action.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from psrolab.errors import ConfigError, ContractError
from psrolab.nn import DQNLearner, DqnHyper, QNetwork, Transition, boltzmann, kl_divergence
from psrolab.oracle import min_kl_to_population, train_response
from psrolab.policies import Policy, QPolicy
from psrolab.population import StateBuffer
from psrolab.rollout import play_episode, policy_actor, sample_opponent

SELECTION_STATES = 1024


@dataclass
class ConfluxConfig:
    start: int = 10
    interval: int = 2
    num_subs: int = 3
    pool_size: int = 5
    imitation_weight: float = 1.0
    diversity_weight: float = 1.0
    routing_episodes: int | None = None
    distill_episodes: int | None = None
    temperature: float = 1.0
    block_fraction: float = 0.1
    # probability that a routing episode faces the cross-play exploiter
    # rather than an opponent drawn from the meta-strategy
    exploiter_weight: float = 0.5
    # "routing": exploiter trains against the current routing policy;
    # "population": against the newest population policy
    exploiter_pairing: str = "routing"
    train_subs: bool = True
    sub_learning_rate: float | None = None
    distill: bool = True

    def validate(self):
        if self.start < 0 or self.interval < 1:
            raise ConfigError("conflux start must be >= 0 and interval >= 1")
        if not 1 <= self.num_subs <= self.pool_size:
            raise ConfigError("need 1 <= num_subs <= pool_size")
        if self.imitation_weight < 0 or self.diversity_weight < 0:
            raise ConfigError("conflux weights must be non-negative")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if not 0.0 < self.block_fraction <= 1.0:
            raise ConfigError("block_fraction must be in (0, 1]")
        if not 0.0 <= self.exploiter_weight <= 1.0:
            raise ConfigError("exploiter_weight must be in [0, 1]")
        if self.exploiter_pairing not in ("routing", "population"):
            raise ConfigError(f"unknown exploiter_pairing {self.exploiter_pairing!r}")
        for name in ("routing_episodes", "distill_episodes"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be positive")
        return self


def conflux_should_run(iteration: int, config: ConfluxConfig) -> bool:
    if iteration < 0:
        raise ContractError("iteration must be >= 0")
    return iteration >= config.start and (iteration - config.start) % config.interval == 0


# ---------------------------------------------------------------- selection

def pairwise_kl(a: Policy, b: Policy, X, masks, temperature: float = 1.0) -> float:
    """Mean over states of KL(a(s) || b(s)) using the policies' smoothed distributions."""
    X = np.atleast_2d(X)
    if len(X) == 0:
        raise ContractError("pairwise_kl needs at least one state")
    return float(kl_divergence(a.distribution(X, masks, temperature),
                               b.distribution(X, masks, temperature)).mean())


class Selection(NamedTuple):
    indices: list
    # per greedy step: (candidate indices, their diversities, picked index)
    trace: list


def meta_order(sigma) -> list:
    """Population indices by descending meta-probability, lower index first on ties."""
    sigma = np.asarray(sigma, dtype=float)
    return sorted(range(len(sigma)), key=lambda k: (-sigma[k], k))


def select_sub_policies(policies, sigma, pool_size: int, num_subs: int, X, masks,
                        temperature: float = 1.0) -> Selection:
    """Greedy powerful-then-diverse selection of ``num_subs`` population indices.

    The highest-probability policy is selected first; the next
    ``pool_size - 1`` by meta-probability form the candidate pool.  Each step
    moves the candidate with the largest diversity (minimum mean KL to the
    already selected policies on the states ``X``) into the selection.  Ties
    keep meta-probability order.
    """
    if len(policies) != len(sigma):
        raise ContractError("sigma length differs from population size")
    if pool_size > len(policies):
        raise ConfigError(f"pool size {pool_size} exceeds population size {len(policies)}")
    if not 1 <= num_subs <= pool_size:
        raise ConfigError("need 1 <= num_subs <= pool_size")
    order = meta_order(sigma)[:pool_size]
    selected, candidates = [order[0]], list(order[1:])
    trace = []
    if num_subs == 1:
        return Selection(selected, trace)
    dists = {k: policies[k].distribution(X, masks, temperature) for k in order}
    dist = {(j, k): float(kl_divergence(dists[j], dists[k]).mean())
            for j in order for k in order if j != k}
    while len(selected) < num_subs:
        div = [min(dist[(c, s)] for s in selected) for c in candidates]
        pick = candidates[int(np.argmax(div))]
        trace.append((list(candidates), div, pick))
        selected.append(pick)
        candidates.remove(pick)
    return Selection(selected, trace)


def selection_states(game, player: int, policy: Policy, states: StateBuffer | None,
                     opponents, weights, rng, count: int = SELECTION_STATES):
    """``count`` decision points of ``policy``, topped up by rollouts if its buffer is short."""
    if states is None:
        states = StateBuffer(count, game.feature_size, game.num_actions)
    if len(states) < count:
        fresh = StateBuffer(count, game.feature_size, game.num_actions)
        X, M = states.sample(count, rng)
        for x, m in zip(X, M):
            fresh.add(x, m, rng)
        actors = [None, None]
        actors[player] = policy_actor(policy)
        opp = [policy_actor(p) for p in opponents]
        record = (player == 0, player == 1)
        # bounded so games with very short episodes still terminate quickly
        for _ in range(4 * count):
            if len(fresh) >= count:
                break
            actors[1 - player] = opp[sample_opponent(weights, rng)]
            _, traj = play_episode(game, actors, rng, record=record)
            fresh.extend(traj[player], rng)
        states = fresh
    return states.sample(count, rng)


# ------------------------------------------------------------------ routing

class RoutingPolicy(Policy):
    """Router Q-network over sub-policy indices plus the sub-policies themselves."""

    kind = "routing"

    def __init__(self, router, subs, provenance=None):
        if router.output_size != len(subs):
            raise ContractError("router output width must equal the number of subs")
        super().__init__(subs[0].num_actions)
        self.router = router
        self.subs = list(subs)
        self.provenance = list(provenance) if provenance is not None else list(range(len(subs)))

    @classmethod
    def from_population(cls, policies, indices, hidden, rng, feature_size: int):
        """Fresh router over deep copies of ``policies[indices]``."""
        subs = [copy.deepcopy(policies[k]) for k in indices]
        router = QNetwork((feature_size, *hidden, len(subs)), rng)
        return cls(router, subs, indices)

    def copy(self) -> "RoutingPolicy":
        return RoutingPolicy(self.router.copy(), [copy.deepcopy(s) for s in self.subs],
                             self.provenance)

    def route(self, X) -> np.ndarray:
        """Greedy sub-policy index per state."""
        q = self.router.forward(np.atleast_2d(X))
        return np.argmax(q, axis=1)

    def _per_sub(self, X, masks, fn):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        idx = self.route(X)
        out = np.zeros(masks.shape)
        for k in np.unique(idx):
            rows = idx == k
            out[rows] = fn(self.subs[k], X[rows], masks[rows])
        return out

    def deploy(self, X, masks):
        return self._per_sub(X, masks, lambda s, x, m: s.deploy(x, m))

    def distribution(self, X, masks, temperature=1.0):
        return self._per_sub(X, masks, lambda s, x, m: s.distribution(x, m, temperature))

    def act(self, x, mask, rng):
        k = int(self.route(x)[0])
        return self.subs[k].act(x, mask, rng)

    def __repr__(self):
        return f"RoutingPolicy(subs={self.provenance})"


class RoutingResult(NamedTuple):
    routing: RoutingPolicy
    exploiter: QPolicy | None
    states: StateBuffer
    router_learner: DQNLearner


def _sub_learners(routing: RoutingPolicy, game, hyper, rng, learning_rate):
    """DQN learners for trainable (Q-network) subs; the sub policy shares the learner's net."""
    learners = []
    for k, sub in enumerate(routing.subs):
        if isinstance(sub, QPolicy):
            learner = DQNLearner(game.feature_size, game.num_actions, hyper, rng,
                                 net=sub.net, learning_rate=learning_rate)
            routing.subs[k] = QPolicy(learner.net)
            learners.append(learner)
        else:
            learners.append(None)
    return learners


def train_routing(game, player: int, routing: RoutingPolicy, opponents, weights,
                  hyper: DqnHyper, config: ConfluxConfig, episodes: int, rng,
                  latest_policy: Policy | None = None,
                  state_cap: int = 10_000) -> RoutingResult:
    """Cross-play training of ``routing`` (modified in place) as ``player``.

    Episodes are split into blocks of ``block_fraction * episodes``.  Each
    round first trains an exploiter for the other player against a frozen
    copy of the routing policy, then trains the router.  In router blocks the
    opponent is the exploiter with probability ``exploiter_weight`` and a
    meta-strategy draw from ``opponents`` otherwise; with weight 0 the
    exploiter is skipped.  The router picks sub-indices epsilon-greedily, the
    chosen sub acts greedily, and the router learns from (s, index, r, s')
    transitions.  Trainable subs also learn from the transitions they
    generated.
    """
    if episodes < 1:
        raise ContractError("episodes must be >= 1")
    n = len(routing.subs)
    router = DQNLearner(game.feature_size, n, hyper, rng, net=routing.router)
    routing.router = router.net
    sub_lr = config.sub_learning_rate
    subs = _sub_learners(routing, game, hyper, rng, sub_lr) if config.train_subs else [None] * n
    states = StateBuffer(state_cap, game.feature_size, game.num_actions)
    opp_actors = [policy_actor(p) for p in opponents]
    use_exploiter = config.exploiter_weight > 0.0
    exploiter = DQNLearner(game.feature_size, game.num_actions, hyper, rng) if use_exploiter else None
    block = max(1, int(round(config.block_fraction * episodes)))
    all_subs = np.ones(n, dtype=bool)
    choices = []

    def routed(state, x, mask, r):
        k = router.act(x, all_subs, r)
        choices.append(k)
        return routing.subs[k].act(x, mask, r)

    actors = [None, None]
    record = (player == 0, player == 1)
    done = 0
    while done < episodes:
        if use_exploiter:
            target = latest_policy if config.exploiter_pairing == "population" else routing.copy()
            if target is None:
                raise ContractError("population pairing needs latest_policy")
            train_response(game, 1 - player, [target], [1.0], hyper, block, rng,
                           learner=exploiter, state_cap=1)
            frozen = policy_actor(QPolicy(exploiter.net.copy()))
        for _ in range(min(block, episodes - done)):
            if use_exploiter and rng.random() < config.exploiter_weight:
                actors[1 - player] = frozen
            else:
                actors[1 - player] = opp_actors[sample_opponent(weights, rng)]
            choices.clear()
            actors[player] = routed
            ret, traj = play_episode(game, actors, rng, record=record)
            steps = traj[player]
            done += 1
            if not steps:
                continue
            router.add_trajectory([(x, all_subs, k) for (x, _, _), k in zip(steps, choices)],
                                  ret[player], rng)
            _train_subs(subs, steps, choices, ret[player], game.num_actions, rng)
            states.extend(steps, rng)
    return RoutingResult(routing, QPolicy(exploiter.net.copy()) if use_exploiter else None,
                         states, router)


def _train_subs(subs, steps, choices, final_reward, num_actions, rng):
    if all(s is None for s in subs):
        return
    last = len(steps) - 1
    for k, ((x, _, a), j) in enumerate(zip(steps, choices)):
        learner = subs[j]
        if learner is None:
            continue
        if k < last:
            nx, nmask, _ = steps[k + 1]
            t = Transition(x, a, 0.0, nx, nmask, False)
        else:
            t = Transition(x, a, final_reward, np.zeros_like(x),
                           np.zeros(num_actions, dtype=bool), True)
        learner.observe(t, rng)


# -------------------------------------------------------------- distillation

def distill_shaping(learner: DQNLearner, routing: Policy, members, imitation_weight: float,
                    diversity_weight: float, temperature: float = 1.0):
    """Per-step reward -l1 * KL(distill || routing) + l2 * min_k KL(distill || pi_k)."""
    def shape(steps):
        if imitation_weight == 0.0 and (diversity_weight == 0.0 or not members):
            return [0.0] * len(steps)
        X = np.array([s[0] for s in steps])
        masks = np.array([s[1] for s in steps])
        own = boltzmann(learner.net.forward(X), masks, temperature)
        r = np.zeros(len(steps))
        if imitation_weight:
            r -= imitation_weight * kl_divergence(own, routing.distribution(X, masks, temperature))
        if diversity_weight and members:
            r += diversity_weight * min_kl_to_population(own, X, masks, members, temperature)
        return list(r)
    return shape


def distill(game, player: int, routing: Policy, members, opponents, weights,
            hyper: DqnHyper, config: ConfluxConfig, episodes: int, rng,
            state_cap: int = 10_000):
    """Train one fresh network on utility plus imitation and diversity rewards.

    Returns ``(learner, states)`` like :func:`psrolab.oracle.train_response`.
    """
    learner = DQNLearner(game.feature_size, game.num_actions, hyper, rng)
    shaping = distill_shaping(learner, routing, members, config.imitation_weight,
                              config.diversity_weight, config.temperature)
    return train_response(game, player, opponents, weights, hyper, episodes, rng,
                          shaping=shaping, learner=learner, state_cap=state_cap)

