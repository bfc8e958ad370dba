import numpy as np
import pytest

from psrolab import oracles
from psrolab.errors import CapacityError, ContractError
from psrolab.evaluation import (GameTree, MixedProfile, aggregate_behavioral, approx_exploitability,
                                best_response_value, exploitability, expected_value, game_tree,
                                head_to_head, policy_value)
from psrolab.games import load_game
from psrolab.nn import DqnHyper
from psrolab.policies import TabularPolicy, UniformPolicy
from psrolab.selftest import _walk, tabular_from_keys


@pytest.fixture(scope="module")
def kuhn():
    game = load_game("kuhn")
    return game, game_tree(game)


def random_tabular(game, player, seed):
    strat = oracles.random_behavioral(game, player, np.random.default_rng(seed))
    return strat, tabular_from_keys(game, player, strat)


def test_kuhn_tree_size(kuhn):
    game, tree = kuhn
    assert len(tree) == 55
    assert tree.num_infosets(0) == tree.num_infosets(1) == 6


def test_node_cap_raises_capacity_error():
    with pytest.raises(CapacityError):
        GameTree(load_game("leduc"), node_cap=100)


def test_imperfect_recall_is_refused():
    game = load_game("liars_dice_ir")
    prof = MixedProfile([[UniformPolicy(13)], [UniformPolicy(13)]], [[1.0], [1.0]])
    with pytest.raises(ContractError):
        exploitability(game, prof)


def test_profile_weights_are_checked():
    with pytest.raises(ContractError):
        MixedProfile([[UniformPolicy(2)]] * 2, [[0.5], [1.0]])
    with pytest.raises(ContractError):
        MixedProfile([[UniformPolicy(2)]] * 2, [[1.0, 0.0], [1.0]])


def test_uniform_kuhn_matches_enumeration(kuhn):
    game, tree = kuhn
    prof = MixedProfile([[UniformPolicy(2)], [UniformPolicy(2)]], [[1.0], [1.0]])
    rep = exploitability(game, prof, tree=tree)
    ref = oracles.exploitability_by_enumeration(game, [{}, {}])
    assert rep.value == pytest.approx(ref, abs=1e-9)
    assert rep.value == pytest.approx(11 / 12, abs=1e-9)
    assert rep.method == "exact" and rep.value >= 0


def test_expected_value_matches_recursion(kuhn):
    game, tree = kuhn
    (s0, p0), (s1, p1) = random_tabular(game, 0, 1), random_tabular(game, 1, 2)
    ref = oracles.expected_value(game.new_initial_state(), [s0, s1])
    assert policy_value(tree, p0, p1) == pytest.approx(ref, abs=1e-12)


def test_single_policy_aggregation_is_identity(kuhn):
    game, tree = kuhn
    _, pol = random_tabular(game, 0, 3)
    agg = aggregate_behavioral(tree, [pol], [1.0], 0)
    assert np.allclose(agg, tree.policy_table(pol, 0))
    twice = aggregate_behavioral(tree, [pol, pol], [0.5, 0.5], 0)
    assert np.allclose(twice, agg)


def test_mixture_value_is_weighted_average(kuhn):
    game, tree = kuhn
    _, a = random_tabular(game, 0, 4)
    _, b = random_tabular(game, 0, 5)
    _, opp = random_tabular(game, 1, 6)
    agg = aggregate_behavioral(tree, [a, b], [0.5, 0.5], 0)
    mixed = expected_value(tree, [agg, tree.policy_table(opp, 1)])
    avg = 0.5 * policy_value(tree, a, opp) + 0.5 * policy_value(tree, b, opp)
    assert mixed == pytest.approx(avg, abs=1e-12)
    # Monte-Carlo: pick a member per episode
    rng = np.random.default_rng(0)
    n = 20_000
    va, _ = head_to_head(game, a, 0, [opp], [1.0], n // 2, rng)
    vb, _ = head_to_head(game, b, 0, [opp], [1.0], n // 2, rng)
    assert abs(0.5 * (va + vb) - mixed) <= 3 * 2 / np.sqrt(n)


def test_br_value_dominates_random_policies(kuhn):
    game, tree = kuhn
    _, opp = random_tabular(game, 1, 7)
    table = tree.policy_table(opp, 1)
    br, br_table = best_response_value(tree, table, 0)
    assert np.all(br_table.sum(axis=1) == 1)
    assert expected_value(tree, [br_table, table]) == pytest.approx(br, abs=1e-12)
    for seed in range(100):
        _, cand = random_tabular(game, 0, 100 + seed)
        assert policy_value(tree, cand, opp) <= br + 1e-12


def test_random_profiles_match_enumeration(kuhn):
    game, tree = kuhn
    rng = np.random.default_rng(8)
    for _ in range(3):
        strat = [oracles.random_behavioral(game, p, rng) for p in (0, 1)]
        pols = [[tabular_from_keys(game, p, strat[p])] for p in (0, 1)]
        rep = exploitability(game, MixedProfile(pols, [[1.0], [1.0]]), tree=tree)
        assert rep.value == pytest.approx(oracles.exploitability_by_enumeration(game, strat),
                                          abs=1e-9)


def test_mixture_exploitability_matches_enumeration(kuhn):
    game, tree = kuhn
    rng = np.random.default_rng(9)
    strats = [[oracles.random_behavioral(game, p, rng) for _ in range(2)] for p in (0, 1)]
    w = [np.array([0.3, 0.7]), np.array([0.6, 0.4])]
    pols = [[tabular_from_keys(game, p, s) for s in strats[p]] for p in (0, 1)]
    rep = exploitability(game, MixedProfile(pols, w), tree=tree)
    ref = oracles.exploitability_by_enumeration(
        game, [list(zip(w[p], strats[p])) for p in (0, 1)])
    assert rep.value == pytest.approx(ref, abs=1e-9)


# alpha = 0 Kuhn equilibrium as P(bet) by (player, card, bets so far); cards J, Q, K = 0, 1, 2
KUHN_NASH = {
    (0, ()): (0.0, 0.0, 0.0),
    (1, (0,)): (1 / 3, 0.0, 1.0),
    (1, (1,)): (0.0, 1 / 3, 1.0),
    (0, (0, 1)): (0.0, 1 / 3, 1.0),
}


def kuhn_nash_policies(game):
    pols = [TabularPolicy(2), TabularPolicy(2)]
    for s in _walk(game):
        p = s.current_player()
        if p >= 0:
            bet = KUHN_NASH[(p, s.bets)][s.cards[p]]
            pols[p].set(s.encode(p), [1 - bet, bet])
    return pols


def test_nash_profile_has_zero_exploitability(kuhn):
    game, tree = kuhn
    p0, p1 = kuhn_nash_policies(game)
    rep = exploitability(game, MixedProfile([[p0], [p1]], [[1.0], [1.0]]), tree=tree)
    assert rep.value == pytest.approx(0.0, abs=1e-9)
    assert rep.br_values[0] == pytest.approx(-1 / 18, abs=1e-9)


def test_head_to_head_rejects_zero_episodes(kuhn):
    game, _ = kuhn
    with pytest.raises(ContractError):
        head_to_head(game, UniformPolicy(2), 0, [UniformPolicy(2)], [1.0], 0,
                     np.random.default_rng(0))


def test_approx_exploitability_is_tagged_and_finite():
    game = load_game("liars_dice_ir")
    hyper = DqnHyper(hidden=(16,), batch_size=16, buffer_size=200)
    prof = MixedProfile([[UniformPolicy(13)], [UniformPolicy(13)]], [[1.0], [1.0]])
    rep = approx_exploitability(game, prof, hyper, 50, np.random.default_rng(0), 50)
    assert rep.method == "approximate" and np.isfinite(rep.value)
    assert len(rep.br_values) == 2
