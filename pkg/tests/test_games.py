import itertools

import numpy as np
import pytest

from psrolab import games
from psrolab.errors import ConfigError, ContractError
from psrolab.games import CHANCE, TERMINAL, load_game
from psrolab.selftest import _walk


def terminals(game):
    return [s for s in _walk(game) if s.current_player() == TERMINAL]


def test_registry_and_unknown_id():
    for gid in ("kuhn", "leduc", "goofspiel5", "liars_dice", "liars_dice_ir", "maze"):
        assert load_game(gid).game_id == gid
    with pytest.raises(ConfigError):
        load_game("chess")


def test_kuhn_root_has_six_deals():
    root = load_game("kuhn").new_initial_state()
    assert root.current_player() == CHANCE
    outcomes = root.chance_outcomes()
    # 3 cards dealt to 2 players without replacement
    assert len(outcomes) == len(list(itertools.permutations(range(3), 2))) == 6
    assert sum(p for _, p in outcomes) == pytest.approx(1.0, abs=1e-12)


def test_maze_and_goofspiel_roots():
    maze = load_game("maze").new_initial_state()
    assert maze.current_player() == 0
    assert not maze.is_chance_node()
    g = load_game("goofspiel5").new_initial_state()
    assert g.current_player() == 0
    assert g.legal_actions() == [0, 1, 2, 3, 4]


def test_kuhn_first_actions_and_pass_pass_payoff():
    game = load_game("kuhn")
    s = game.new_initial_state().apply_action(0)   # deal (0, 1): p0 holds the lowest card
    assert s.legal_actions() == [games.PASS, games.BET]
    t = s.apply_action(games.PASS).apply_action(games.PASS)
    assert t.is_terminal()
    assert t.returns() == (-1.0, 1.0)


def test_goofspiel_spent_cards_are_removed():
    s = load_game("goofspiel5").new_initial_state()
    s = s.apply_action(2).apply_action(0)          # p0 bids card 3, p1 bids card 1
    assert s.legal_actions() == [0, 1, 3, 4]


def test_goofspiel_second_mover_is_blind():
    g = load_game("goofspiel5")
    a = g.new_initial_state().apply_action(0)
    b = g.new_initial_state().apply_action(4)
    assert a.current_player() == b.current_player() == 1
    assert a.information_state_key(1) == b.information_state_key(1)
    assert np.array_equal(a.encode(1), b.encode(1))


def test_illegal_and_terminal_contracts():
    game = load_game("goofspiel5")
    s = game.new_initial_state().apply_action(2).apply_action(0)
    with pytest.raises(ContractError):
        s.apply_action(2)                          # card already spent
    with pytest.raises(ContractError):
        game.new_initial_state().returns()
    t = terminals(load_game("kuhn"))[0]
    with pytest.raises(ContractError):
        t.legal_actions()


def test_liars_dice_wrong_challenge_loses():
    game = load_game("liars_dice")
    s = game.new_initial_state()
    while s.is_chance_node():
        s = s.apply_action(s.chance_outcomes()[0][0])
    # bid "one die showing <own face>" is always true, so challenging it loses
    face = int(np.argmax(s.encode(0)[2:8])) + 1
    bid = face - 1                                 # action for (quantity 1, face)
    assert games.bid_of(bid) == (1, face)
    s = s.apply_action(bid).apply_action(games.LIAR)
    assert s.returns() == (1.0, -1.0)


@pytest.mark.parametrize("gid", ["kuhn", "leduc", "liars_dice"])
def test_zero_sum_bounds_and_depth(gid):
    game = load_game(gid)
    for t in terminals(game):
        u = t.returns()
        assert u[0] + u[1] == 0
        assert abs(u[0]) <= game.max_utility
        assert len(t.history) <= game.max_depth


def test_goofspiel3_zero_sum_and_results():
    game = load_game("goofspiel", num_cards=3)
    outs = {t.returns() for t in terminals(game)}
    assert outs <= {(1.0, -1.0), (-1.0, 1.0), (0.0, 0.0)}
    assert games.goofspiel_win_rate(1.0) == 1.0 and games.goofspiel_win_rate(-1.0) == 0.0


@pytest.mark.parametrize("gid", ["kuhn", "leduc", "liars_dice"])
def test_chance_probabilities_sum_to_one(gid):
    for s in _walk(load_game(gid)):
        if s.current_player() == CHANCE:
            assert abs(sum(p for _, p in s.chance_outcomes()) - 1.0) <= 1e-9


def test_hidden_card_does_not_change_key():
    game = load_game("kuhn")
    root = game.new_initial_state()
    keys = {}
    for a, _ in root.chance_outcomes():
        s = root.apply_action(a)
        keys.setdefault(s.encode(0).tobytes(), set()).add(s.information_state_key(0))
    # p0 holding the same card shares one key whatever p1 holds
    assert all(len(v) == 1 for v in keys.values())
    assert len(keys) == 3


def test_liars_dice_imperfect_recall_key():
    game = load_game("liars_dice_ir")
    s = game.new_initial_state()
    while s.is_chance_node():
        s = s.apply_action(s.chance_outcomes()[0][0])
    a = s.apply_action(0).apply_action(1).apply_action(3)
    b = s.apply_action(3)
    assert a.current_player() == b.current_player() == 1
    assert a.information_state_key(1) == b.information_state_key(1)
    full = load_game("liars_dice")
    assert not game.perfect_recall and full.perfect_recall


@pytest.mark.parametrize("gid", ["kuhn", "leduc", "goofspiel5", "liars_dice", "maze"])
def test_encoding_fixed_length_and_deterministic(gid):
    game = load_game(gid)
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = game.new_initial_state()
        while not s.is_terminal():
            if s.is_chance_node():
                s = s.apply_action(games.sample_chance(s, rng))
                continue
            p = s.current_player()
            x = s.encode(p)
            assert x.shape == (game.feature_size,)
            assert np.all(np.isfinite(x))
            assert np.array_equal(x, s.encode(p))
            assert s.information_state_key(p) == s.information_state_key(p)
            s = s.apply_action(int(rng.choice(s.legal_actions())))


def test_maze_capture_and_blocked_moves():
    game = load_game("maze")
    s = game.new_initial_state()
    legal = s.legal_actions()
    assert set(legal) <= {games.UP, games.DOWN, games.LEFT, games.RIGHT}
    # start is on the bottom row, so "down" is blocked
    assert games.DOWN not in legal
    assert len(terminals_of_short_maze()) > 0


def terminals_of_short_maze():
    game = games.Maze(max_steps=2)
    return terminals(game)


def test_maze_outcomes():
    for t in terminals_of_short_maze():
        assert t.returns() in {(1.0, -1.0), (-1.0, 1.0), (0.0, 0.0)}
