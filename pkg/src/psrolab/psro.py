"""PSRO outer loop for the vanilla, diversity-regularized and conflux variants."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from psrolab import checkpoint
from psrolab.conflux import (ConfluxConfig, RoutingPolicy, conflux_should_run, distill,
                             meta_order, select_sub_policies, selection_states, train_routing)
from psrolab.errors import ConfigError
from psrolab.evaluation import (MixedProfile, approx_exploitability, exploitability,
                                head_to_head)
from psrolab.games import load_game
from psrolab.meta import PayoffMatrix, fill_missing, solve_meta_nash
from psrolab.nn import DQNLearner, DqnHyper
from psrolab.oracle import diversity_shaping, snapshot, train_response
from psrolab.policies import UniformPolicy
from psrolab.population import Member, Population

VARIANTS = ("psro", "psd", "conflux")
METRICS_COLUMNS = ("iteration", "cumulative_episodes", "exploitability",
                   "br_utility_p0", "br_utility_p1")
TIMING_COLUMNS = ("iteration", "wallclock_s")


@dataclass
class RunConfig:
    game: str = "kuhn"
    game_params: dict = field(default_factory=dict)
    variant: str = "psro"
    iterations: int = 10
    episodes: int = 20_000
    diversity_weight: float = 1.0
    seed: int = 0
    episodes_per_entry: int = 1000
    matrix_estimator: str = "sample"
    meta_solver: str = "lp"
    evaluation: str = "auto"
    approx_episodes: int | None = None
    eval_episodes: int = 1000
    state_cap: int = 10_000
    hyper: DqnHyper = field(default_factory=DqnHyper)
    conflux: ConfluxConfig = field(default_factory=ConfluxConfig)

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("iterations", "episodes", "episodes_per_entry", "eval_episodes", "state_cap"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.diversity_weight < 0:
            raise ConfigError("diversity_weight must be non-negative")
        if self.matrix_estimator not in ("sample", "exact"):
            raise ConfigError("matrix_estimator must be 'sample' or 'exact'")
        if self.meta_solver not in ("lp", "regret_matching"):
            raise ConfigError("meta_solver must be 'lp' or 'regret_matching'")
        if self.evaluation not in ("auto", "exact", "approx", "none"):
            raise ConfigError("evaluation must be auto, exact, approx or none")
        self.hyper.validate()
        self.conflux.validate()
        if self.variant == "conflux" and self.conflux.start < self.conflux.pool_size:
            # the population holds t policies when iteration t starts
            raise ConfigError("conflux start must be >= pool_size")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hyper"] = self.hyper.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        hyper = dict(d.pop("hyper", {}))
        if "hidden" in hyper:
            hyper["hidden"] = tuple(hyper["hidden"])
        conflux = d.pop("conflux", {})
        return cls(hyper=DqnHyper(**hyper), conflux=ConfluxConfig(**conflux), **d)

    def make_game(self):
        return load_game(self.game, **self.game_params)


def iteration_rng(seed: int, iteration: int, stream: int) -> np.random.Generator:
    """Independent stream per (seed, iteration, stream) so resumed runs match fresh ones."""
    return np.random.default_rng([seed, iteration, stream])


# ------------------------------------------------------------------ oracles

def train_best_response(game, player: int, population: Population, sigma_opp, config: RunConfig,
                        rng, diversity_weight: float | None = None):
    """Fresh DQN best response to the opponent meta-strategy.

    With a positive diversity weight every step also earns
    ``weight * min_k KL(learner || pi_k)`` over the player's own population.
    Returns ``(member, episodes_used)``.
    """
    opponents = population.policies(1 - player)
    if not opponents:
        raise ConfigError("opponent population is empty")
    if diversity_weight is None:
        diversity_weight = config.diversity_weight if config.variant != "psro" else 0.0
    learner = None
    shaping = None
    if diversity_weight > 0:
        learner = DQNLearner(game.feature_size, game.num_actions, config.hyper, rng)
        shaping = diversity_shaping(learner, population[player], diversity_weight,
                                    config.conflux.temperature)
    learner, states = train_response(game, player, opponents, sigma_opp, config.hyper,
                                     config.episodes, rng, shaping=shaping, learner=learner,
                                     state_cap=config.state_cap)
    tag = "psd" if diversity_weight > 0 else "br"
    return Member(snapshot(learner), 0, tag, states), config.episodes


class ConfluxOutput(NamedTuple):
    member: Member
    routing: RoutingPolicy
    selected: list
    episodes: int


def conflux_response(game, player: int, population: Population, sigma, config: RunConfig,
                     rng) -> ConfluxOutput:
    """Select sub-policies, train a routing policy by cross-play, then distill it."""
    cc = config.conflux
    members = population[player]
    policies = population.policies(player)
    opponents = population.policies(1 - player)
    sigma_own, sigma_opp = sigma[player], sigma[1 - player]
    top = members[meta_order(sigma_own)[0]]
    X, masks = selection_states(game, player, top.policy, top.states, opponents, sigma_opp, rng)
    selected = select_sub_policies(policies, sigma_own, cc.pool_size, cc.num_subs, X, masks,
                                   cc.temperature).indices
    routing = RoutingPolicy.from_population(policies, selected, config.hyper.hidden, rng,
                                            game.feature_size)
    r_eps = cc.routing_episodes or config.episodes
    result = train_routing(game, player, routing, opponents, sigma_opp, config.hyper, cc, r_eps,
                           rng, latest_policy=policies[-1], state_cap=config.state_cap)
    used = r_eps * (2 if result.exploiter is not None else 1)
    if cc.distill:
        d_eps = cc.distill_episodes or config.episodes
        learner, states = distill(game, player, routing, members, opponents, sigma_opp,
                                  config.hyper, cc, d_eps, rng, state_cap=config.state_cap)
        member = Member(snapshot(learner), 0, "distill", states)
        used += d_eps
    else:
        member = Member(routing, 0, "routing", result.states)
    return ConfluxOutput(member, routing, selected, used)


# -------------------------------------------------------------------- runs

class RunState:
    """Everything a run needs to continue: population, matrix and meta-strategy history."""

    def __init__(self, population, matrix, sigmas, iteration=0, cumulative_episodes=0):
        self.population = population
        self.matrix = matrix
        self.sigmas = sigmas            # sigmas[t] = (sigma_0, sigma_1) after iteration t
        self.iteration = iteration
        self.cumulative_episodes = cumulative_episodes

    @property
    def sigma(self):
        return self.sigmas[-1]


def initial_state(game, config: RunConfig) -> RunState:
    pop = Population()
    for p in (0, 1):
        pop.append(p, Member(UniformPolicy(game.num_actions), 0, "uniform", None))
    matrix = fill_missing(PayoffMatrix(), game, [pop.policies(0), pop.policies(1)],
                          config.episodes_per_entry, config.seed, config.matrix_estimator)
    return RunState(pop, matrix, [(np.ones(1), np.ones(1))])


def evaluate_profile(game, config: RunConfig, population: Population, sigma, iteration: int):
    """Exploitability report of the meta-strategy profile, per ``config.evaluation``."""
    mode = config.evaluation
    if mode == "none":
        return None
    profile = MixedProfile([population.policies(0), population.policies(1)], list(sigma))
    if mode == "auto":
        mode = "exact" if game.perfect_recall else "approx"
    if mode == "exact":
        return exploitability(game, profile)
    hyper = config.hyper
    return approx_exploitability(game, profile, hyper, config.approx_episodes or config.episodes,
                                 iteration_rng(config.seed, iteration, 9), config.eval_episodes)


def run_iteration(game, config: RunConfig, state: RunState, t: int) -> dict:
    """Iteration ``t`` (1-based): grow both populations, refill the matrix, re-solve."""
    sigma_prev = state.sigma
    pop = state.population
    new = []
    used = 0
    run_conflux = config.variant == "conflux" and conflux_should_run(t, config.conflux)
    for p in (0, 1):
        rng = iteration_rng(config.seed, t, p)
        if run_conflux:
            out = conflux_response(game, p, pop, sigma_prev, config, rng)
            member, eps = out.member, out.episodes
        else:
            member, eps = train_best_response(game, p, pop, sigma_prev[1 - p], config, rng)
        member.iteration = t
        new.append(member)
        used += eps
    # both players respond to the previous meta-strategy, so append afterwards
    for p in (0, 1):
        pop.append(p, new[p])
    rows, cols = pop.sizes()
    fill_missing(state.matrix, game, [pop.policies(0), pop.policies(1)],
                 config.episodes_per_entry, config.seed, config.matrix_estimator)
    nash = solve_meta_nash(state.matrix, method=config.meta_solver)
    M = state.matrix.means
    br0 = float(M[rows - 1, :cols - 1] @ sigma_prev[1])
    br1 = float(-(sigma_prev[0] @ M[:rows - 1, cols - 1]))
    state.sigmas.append((nash.row, nash.col))
    state.iteration = t
    state.cumulative_episodes += used
    report = evaluate_profile(game, config, pop, (nash.row, nash.col), t)
    return {
        "iteration": t,
        "cumulative_episodes": state.cumulative_episodes,
        "exploitability": "" if report is None else report.value,
        "br_utility_p0": br0,
        "br_utility_p1": br1,
    }


class RunResult(NamedTuple):
    state: RunState
    metrics: list


def _format(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_rows(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_format(r[c]) for c in columns])


def read_metrics(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def psro_run(config: RunConfig, out_dir=None, resume: bool = True, log=None) -> RunResult:
    """Run ``config.iterations`` PSRO iterations.

    When ``out_dir`` is given, metrics.csv (deterministic under a fixed seed),
    timing.csv (wall-clock seconds) and a checkpoint are written after every
    iteration; an existing compatible checkpoint there is resumed.
    """
    config.validate()
    game = config.make_game()
    out = Path(out_dir) if out_dir is not None else None
    metrics, timing = [], []
    state = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if resume and checkpoint.exists(out):
            ck = checkpoint.load(out, game, config)
            state = RunState(ck["population"], ck["matrix"], ck["sigmas"], ck["iteration"],
                             ck["cumulative_episodes"])
            metrics, timing = ck["metrics"][:state.iteration], ck["timing"][:state.iteration]
            if log:
                log(f"resuming after iteration {state.iteration}")
    if state is None:
        state = initial_state(game, config)
    start = time.perf_counter()
    for t in range(state.iteration + 1, config.iterations + 1):
        row = run_iteration(game, config, state, t)
        metrics.append(row)
        timing.append({"iteration": t, "wallclock_s": round(time.perf_counter() - start, 3)})
        if log:
            log(f"iteration {t}: exploitability={row['exploitability']}")
        if out is not None:
            _write_rows(out / "metrics.csv", METRICS_COLUMNS, metrics)
            _write_rows(out / "timing.csv", TIMING_COLUMNS, timing)
            checkpoint.save(out, config, state)
    if out is not None and not metrics:
        _write_rows(out / "metrics.csv", METRICS_COLUMNS, metrics)
    return RunResult(state, metrics)


# --------------------------------------------------- single-iteration study

class UpliftRow(NamedTuple):
    player: int
    method: str
    utility: float
    stderr: float


def single_iteration_uplift(game, config: RunConfig, population: Population, sigma, player: int,
                            seed: int, episodes: int = 1000) -> list:
    """Head-to-head utility of one extra iteration's response, three ways.

    ``standard`` is a diversity-regularized best response, ``routing`` the
    cross-play-trained routing policy and ``distill`` its distilled network.
    Each plays ``episodes`` episodes against the opponent meta-strategy.
    """
    opponents = population.policies(1 - player)
    sigma_opp = sigma[1 - player]
    rows = []
    std, _ = train_best_response(game, player, population, sigma_opp, config,
                                 np.random.default_rng([seed, 0, player]),
                                 diversity_weight=config.diversity_weight)
    out = conflux_response(game, player, population, sigma, config,
                           np.random.default_rng([seed, 1, player]))
    candidates = [("standard", std.policy), ("routing", out.routing)]
    if config.conflux.distill:
        candidates.append(("distill", out.member.policy))
    for name, policy in candidates:
        mean, se = head_to_head(game, policy, player, opponents, sigma_opp, episodes,
                                np.random.default_rng([seed, 2, player]))
        rows.append(UpliftRow(player, name, mean, se))
    return rows

