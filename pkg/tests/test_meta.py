import numpy as np
import pytest

from psrolab import oracles
from psrolab.errors import ContractError
from psrolab.evaluation import game_tree, policy_value
from psrolab.games import load_game
from psrolab.meta import (PayoffMatrix, fill_missing, load_strategy, matrix_exploitability,
                          save_strategy, solve_meta_nash)
from psrolab.policies import TabularPolicy, UniformPolicy, maze_scripted_policy
from psrolab.selftest import tabular_from_keys

RPS = np.array([[0, -1, 1], [1, 0, -1], [-1, 1, 0]], dtype=float)
PENNIES = np.array([[1, -1], [-1, 1]], dtype=float)


@pytest.mark.parametrize("method", ["lp", "regret_matching"])
def test_matching_pennies_and_rps(method):
    nash = solve_meta_nash(PENNIES, method=method)
    assert np.allclose(nash.row, 0.5, atol=1e-4) and np.allclose(nash.col, 0.5, atol=1e-4)
    nash = solve_meta_nash(RPS, method=method)
    assert np.allclose(nash.row, 1 / 3, atol=1e-4) and np.allclose(nash.col, 1 / 3, atol=1e-4)
    v, x, y = oracles.support_enumeration(RPS)
    assert v == pytest.approx(0.0, abs=1e-12) and np.allclose(x, 1 / 3)


def test_dominant_row():
    nash = solve_meta_nash(np.array([[1.0, 1.0], [0.0, 0.0]]))
    assert nash.row[0] == pytest.approx(1.0, abs=1e-9)
    assert nash.value == pytest.approx(1.0)


def test_one_by_one_and_bad_input():
    nash = solve_meta_nash([[0.25]])
    assert nash.row.tolist() == [1.0] and nash.value == 0.25
    with pytest.raises(ContractError):
        solve_meta_nash(np.zeros((0, 2)))
    with pytest.raises(ContractError):
        solve_meta_nash(PayoffMatrix(2, 2))


def test_matrix_exploitability_values():
    assert matrix_exploitability(PENNIES, [0.5, 0.5], [0.5, 0.5]) == pytest.approx(0, abs=1e-9)
    assert matrix_exploitability(RPS, np.full(3, 1 / 3), np.full(3, 1 / 3)) == pytest.approx(0)
    assert matrix_exploitability(PENNIES, [1, 0], [1, 0]) == 2.0
    with pytest.raises(ContractError):
        matrix_exploitability(PENNIES, [1.0], [0.5, 0.5])


def test_random_matrices_match_support_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(50):
        m, n = rng.integers(1, 5, size=2)
        M = rng.uniform(-1, 1, size=(m, n))
        nash = solve_meta_nash(M)
        assert matrix_exploitability(M, nash.row, nash.col) <= 1e-6
        assert nash.value == pytest.approx(oracles.support_enumeration(M)[0], abs=1e-5)


def test_regret_matching_warns_when_capped():
    rng = np.random.default_rng(0)
    M = rng.uniform(-1, 1, size=(6, 6))
    with pytest.warns(RuntimeWarning):
        nash = solve_meta_nash(M, method="regret_matching", tol=1e-12, max_iter=100)
    assert not nash.converged


def test_matrix_and_strategy_csv_round_trip(tmp_path):
    m = PayoffMatrix(2, 3)
    m.means[:] = np.random.default_rng(0).normal(size=(2, 3))
    m.counts[:] = [[1, 2, 3], [4, 5, 0]]
    m.save(tmp_path / "matrix.csv")
    back = PayoffMatrix.load(tmp_path / "matrix.csv")
    assert np.array_equal(back.means, m.means) and np.array_equal(back.counts, m.counts)
    assert back.missing().tolist() == [[False] * 3, [False, False, True]]
    sigma = np.array([0.1, 0.2, 0.7])
    save_strategy(tmp_path / "s.csv", sigma)
    assert np.array_equal(load_strategy(tmp_path / "s.csv"), sigma)


def test_deterministic_entry_is_single_playout():
    game = load_game("maze")
    pops = [[maze_scripted_policy("pi1")], [maze_scripted_policy("monster")]]
    for n in (1, 7):
        m = fill_missing(PayoffMatrix(), game, pops, n, seed=0)
        assert m.means[0, 0] == -1.0 and m.counts[0, 0] == n


def test_symmetric_self_play_is_near_zero():
    game = load_game("goofspiel", num_cards=3)
    n = 4000
    m = fill_missing(PayoffMatrix(), game, [[UniformPolicy(3)], [UniformPolicy(3)]], n, seed=1)
    # |return| <= 1 so the standard error is at most 1/sqrt(n)
    assert abs(m.means[0, 0]) <= 3 / np.sqrt(n)


def test_kuhn_entry_matches_exact_value():
    game = load_game("kuhn")
    rng = np.random.default_rng(3)
    pols = [tabular_from_keys(game, p, oracles.random_behavioral(game, p, rng)) for p in (0, 1)]
    exact = policy_value(game_tree(game), pols[0], pols[1])
    n = 20_000
    m = fill_missing(PayoffMatrix(), game, [[pols[0]], [pols[1]]], n, seed=2)
    assert abs(m.means[0, 0] - exact) <= 3 * 2 / np.sqrt(n)
    e = fill_missing(PayoffMatrix(), game, [[pols[0]], [pols[1]]], 1, seed=2, estimator="exact")
    assert e.means[0, 0] == pytest.approx(exact, abs=1e-12)


def test_fill_missing_only_touches_new_entries():
    game = load_game("kuhn")
    pops = [[UniformPolicy(2)], [UniformPolicy(2)]]
    m = fill_missing(PayoffMatrix(), game, pops, 50, seed=0)
    first = m.means[0, 0]
    pops[0].append(TabularPolicy(2))
    pops[1].append(TabularPolicy(2))
    m = fill_missing(m, game, pops, 50, seed=0)
    assert m.shape == (2, 2) and m.is_complete()
    assert m.means[0, 0] == first
    with pytest.raises(ContractError):
        fill_missing(m, game, pops, 0, seed=0)
