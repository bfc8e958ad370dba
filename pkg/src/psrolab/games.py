"""Two-player zero-sum extensive-form games.

Every game exposes immutable states with the same surface: current actor,
legal actions, chance outcomes, transitions, terminal returns, an
information-state key (bytes) and a fixed-length feature vector for the
acting player.  Simultaneous moves (Goofspiel bids) are serialized: player 0
commits first and player 1 decides without seeing the pending bid.

Feature layouts (all entries 0/1):

=============  ====  =========================================================
game           dim   layout
=============  ====  =========================================================
kuhn           11    player(2) | own card J,Q,K (3) | 3 betting slots x (pass, bet)
leduc          32    player(2) | own rank (3) | public rank (3) |
                     2 rounds x 4 slots x (fold, call, raise)
goofspiel(n)   2+2n  player(2) | own hand (n) | turn (n) |
               +2n^2 n completed turns x (own bid (n), opponent bid (n))
liars_dice     20    player(2) | own face (6) | bids made so far (12)
liars_dice_ir  20    player(2) | own face (6) | current bid (12)
maze           58    player(2) | human cell (28) | monster cell (28)
=============  ====  =========================================================
"""

from __future__ import annotations

import itertools

import numpy as np

from psrolab.errors import ConfigError, ContractError

CHANCE = -1
TERMINAL = -2


class State:
    """Base class for immutable game states.

    Subclasses implement ``current_player``, ``_legal_actions``, ``_apply``,
    ``_returns``, ``_key`` and ``_encode``; this class enforces the contracts.
    """

    __slots__ = ("game", "history")

    def __init__(self, game, history=()):
        self.game = game
        self.history = history

    def current_player(self) -> int:
        raise NotImplementedError

    def is_terminal(self) -> bool:
        return self.current_player() == TERMINAL

    def is_chance_node(self) -> bool:
        return self.current_player() == CHANCE

    def chance_outcomes(self) -> list[tuple[int, float]]:
        raise ContractError("not a chance node")

    def legal_actions(self, player: int | None = None) -> list[int]:
        actor = self.current_player()
        if actor == TERMINAL:
            raise ContractError("terminal state has no legal actions")
        if player is not None and player != actor:
            raise ContractError(f"player {player} is not the current actor ({actor})")
        if actor == CHANCE:
            return [a for a, _ in self.chance_outcomes()]
        return self._legal_actions()

    def legal_mask(self) -> np.ndarray:
        mask = np.zeros(self.game.num_actions, dtype=bool)
        mask[self._legal_actions()] = True
        return mask

    def apply_action(self, action: int) -> "State":
        actor = self.current_player()
        if action not in self.legal_actions():
            raise ContractError(f"illegal action {action} for actor {actor}")
        return self._apply(actor, action)

    def returns(self) -> tuple[float, float]:
        if not self.is_terminal():
            raise ContractError("returns() on a non-terminal state")
        return self._returns()

    def information_state_key(self, player: int | None = None) -> bytes:
        return self._key(self._decision_player(player))

    def encode(self, player: int | None = None) -> np.ndarray:
        return self._encode(self._decision_player(player))

    def _decision_player(self, player):
        actor = self.current_player()
        if actor < 0:
            raise ContractError("information state requested at a non-decision node")
        if player is not None and player != actor:
            raise ContractError(f"player {player} is not acting")
        return actor

    def __repr__(self):
        return f"{type(self).__name__}(history={self.history})"


class Game:
    """Static description of a game; ``new_initial_state`` returns the root."""

    name = "game"
    num_actions = 0
    feature_size = 0
    max_utility = 1.0
    max_depth = 0
    perfect_recall = True
    has_chance = True

    def new_initial_state(self) -> State:
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


# --------------------------------------------------------------------- Kuhn

KUHN_DEALS = list(itertools.permutations(range(3), 2))
PASS, BET = 0, 1


class KuhnState(State):
    __slots__ = ("cards", "bets")

    def __init__(self, game, history=(), cards=None, bets=()):
        super().__init__(game, history)
        self.cards = cards
        self.bets = bets

    def current_player(self):
        if self.cards is None:
            return CHANCE
        b = self.bets
        if b in ((PASS, PASS), (BET, PASS), (BET, BET)) or len(b) == 3:
            return TERMINAL
        return len(b) % 2

    def chance_outcomes(self):
        if self.cards is not None:
            raise ContractError("not a chance node")
        return [(i, 1.0 / len(KUHN_DEALS)) for i in range(len(KUHN_DEALS))]

    def _legal_actions(self):
        return [PASS, BET]

    def _apply(self, actor, action):
        history = self.history + ((actor, action),)
        if actor == CHANCE:
            return KuhnState(self.game, history, KUHN_DEALS[action], ())
        return KuhnState(self.game, history, self.cards, self.bets + (action,))

    def _returns(self):
        b = self.bets
        if b == (BET, PASS):
            return (1.0, -1.0)
        if b == (PASS, BET, PASS):
            return (-1.0, 1.0)
        stake = 1.0 if b == (PASS, PASS) else 2.0
        winner = 0 if self.cards[0] > self.cards[1] else 1
        return (stake, -stake) if winner == 0 else (-stake, stake)

    def _key(self, player):
        bets = "".join("pb"[a] for a in self.bets)
        return f"{player}|{self.cards[player]}|{bets}".encode()

    def _encode(self, player):
        x = np.zeros(11)
        x[player] = 1.0
        x[2 + self.cards[player]] = 1.0
        for i, a in enumerate(self.bets):
            x[5 + 2 * i + a] = 1.0
        return x


class KuhnPoker(Game):
    """Three-card Kuhn poker; actions 0 = pass/check/fold, 1 = bet/call."""

    name = "kuhn"
    num_actions = 2
    feature_size = 11
    max_utility = 2.0
    max_depth = 4

    def new_initial_state(self):
        return KuhnState(self)


# -------------------------------------------------------------------- Leduc

FOLD, CALL, RAISE = 0, 1, 2
LEDUC_RAISE = (2, 4)
LEDUC_MAX_RAISES = 2


def _round_over(actions):
    return len(actions) >= 2 and actions[-1] == CALL


class LeducState(State):
    __slots__ = ("cards", "public", "rounds", "contrib", "folded")

    def __init__(self, game, history=(), cards=(), public=None, rounds=((),),
                 contrib=(1, 1), folded=None):
        super().__init__(game, history)
        self.cards = cards
        self.public = public
        self.rounds = rounds
        self.contrib = contrib
        self.folded = folded

    def current_player(self):
        if self.folded is not None:
            return TERMINAL
        if len(self.cards) < 2:
            return CHANCE
        acts = self.rounds[-1]
        if _round_over(acts):
            if len(self.rounds) == 2:
                return TERMINAL
            return CHANCE
        return len(acts) % 2

    def _deck(self):
        used = set(self.cards)
        if self.public is not None:
            used.add(self.public)
        return [c for c in range(6) if c not in used]

    def chance_outcomes(self):
        if self.current_player() != CHANCE:
            raise ContractError("not a chance node")
        deck = self._deck()
        return [(c, 1.0 / len(deck)) for c in deck]

    def _legal_actions(self):
        p = len(self.rounds[-1]) % 2
        legal = []
        if self.contrib[p] < self.contrib[1 - p]:
            legal.append(FOLD)
        legal.append(CALL)
        if self.rounds[-1].count(RAISE) < LEDUC_MAX_RAISES:
            legal.append(RAISE)
        return legal

    def _apply(self, actor, action):
        history = self.history + ((actor, action),)
        if actor == CHANCE:
            if len(self.cards) < 2:
                return LeducState(self.game, history, self.cards + (action,),
                                  self.public, self.rounds, self.contrib)
            return LeducState(self.game, history, self.cards, action,
                              self.rounds + ((),), self.contrib)
        contrib = list(self.contrib)
        folded = None
        if action == FOLD:
            folded = actor
        elif action == CALL:
            contrib[actor] = contrib[1 - actor]
        else:
            contrib[actor] = contrib[1 - actor] + LEDUC_RAISE[len(self.rounds) - 1]
        rounds = self.rounds[:-1] + (self.rounds[-1] + (action,),)
        return LeducState(self.game, history, self.cards, self.public, rounds,
                          tuple(contrib), folded)

    def _returns(self):
        if self.folded is not None:
            loss = float(self.contrib[self.folded])
            return (-loss, loss) if self.folded == 0 else (loss, -loss)
        pub = self.public // 2
        strength = []
        for c in self.cards:
            r = c // 2
            strength.append(10 + r if r == pub else r)
        pot = float(self.contrib[0])
        if strength[0] == strength[1]:
            return (0.0, 0.0)
        return (pot, -pot) if strength[0] > strength[1] else (-pot, pot)

    def _key(self, player):
        pub = "-" if self.public is None else str(self.public)
        r = ["".join("fcr"[a] for a in acts) for acts in self.rounds]
        if len(r) == 1:
            r.append("")
        return f"{player}|{self.cards[player]}|{pub}|{r[0]}|{r[1]}".encode()

    def _encode(self, player):
        x = np.zeros(32)
        x[player] = 1.0
        x[2 + self.cards[player] // 2] = 1.0
        if self.public is not None:
            x[5 + self.public // 2] = 1.0
        for r, acts in enumerate(self.rounds):
            for i, a in enumerate(acts):
                x[8 + 12 * r + 3 * i + a] = 1.0
        return x


class LeducPoker(Game):
    """Leduc hold'em: 6 cards (3 ranks x 2 suits), two betting rounds.

    Raise sizes 2 then 4, at most two raises per round, ante 1.
    Actions: 0 fold (only when facing a bet), 1 check/call, 2 raise.
    """

    name = "leduc"
    num_actions = 3
    feature_size = 32
    max_utility = 13.0
    max_depth = 11

    def new_initial_state(self):
        return LeducState(self)


# ---------------------------------------------------------------- Goofspiel

class GoofspielState(State):
    __slots__ = ("bids", "pending", "points")

    def __init__(self, game, history=(), bids=(), pending=None, points=(0, 0)):
        super().__init__(game, history)
        self.bids = bids
        self.pending = pending
        self.points = points

    def current_player(self):
        if len(self.bids) == self.game.num_cards:
            return TERMINAL
        return 0 if self.pending is None else 1

    def _hand(self, player):
        spent = {b[player] for b in self.bids}
        if player == 0 and self.pending is not None:
            spent.add(self.pending)
        return [c for c in range(self.game.num_cards) if c not in spent]

    def _legal_actions(self):
        return self._hand(self.current_player())

    def prize(self) -> int:
        """Point value of the prize card on the table (descending order)."""
        return self.game.num_cards - len(self.bids)

    def _apply(self, actor, action):
        history = self.history + ((actor, action),)
        if actor == 0:
            return GoofspielState(self.game, history, self.bids, action, self.points)
        b0, b1 = self.pending, action
        points = list(self.points)
        if b0 > b1:
            points[0] += self.prize()
        elif b1 > b0:
            points[1] += self.prize()
        return GoofspielState(self.game, history, self.bids + ((b0, b1),), None,
                              tuple(points))

    def _returns(self):
        p0, p1 = self.points
        if p0 == p1:
            return (0.0, 0.0)
        return (1.0, -1.0) if p0 > p1 else (-1.0, 1.0)

    def _key(self, player):
        own = "".join(str(b[player]) for b in self.bids)
        opp = "".join(str(b[1 - player]) for b in self.bids)
        return f"{player}|{own}|{opp}".encode()

    def _encode(self, player):
        n = self.game.num_cards
        x = np.zeros(self.game.feature_size)
        x[player] = 1.0
        for c in self._hand(player):
            x[2 + c] = 1.0
        x[2 + n + len(self.bids)] = 1.0
        base = 2 + 2 * n
        for t, b in enumerate(self.bids):
            x[base + 2 * n * t + b[player]] = 1.0
            x[base + 2 * n * t + n + b[1 - player]] = 1.0
        return x


class Goofspiel(Game):
    """Goofspiel with ``num_cards`` cards, prizes revealed n, n-1, ..., 1.

    Action k bids card k+1.  Ties discard the prize.  Returns are
    +1/-1 for a win/loss on total prize points and 0 for a tie; use
    :func:`goofspiel_win_rate` to report on the [0, 1] scale.
    """

    name = "goofspiel"
    max_utility = 1.0
    has_chance = False

    def __init__(self, num_cards: int = 5):
        if not 1 <= num_cards <= 13:
            raise ConfigError(f"goofspiel num_cards must be in 1..13, got {num_cards}")
        self.num_cards = num_cards
        self.num_actions = num_cards
        self.feature_size = 2 + 2 * num_cards + 2 * num_cards * num_cards
        self.max_depth = 2 * num_cards

    def params(self):
        return {"num_cards": self.num_cards}

    def new_initial_state(self):
        return GoofspielState(self)


def goofspiel_win_rate(utility: float) -> float:
    """Map a +1/0/-1 Goofspiel return onto the 1/0.5/0 reporting scale."""
    return 0.5 * (utility + 1.0)


# -------------------------------------------------------------- Liar's dice

LIAR = 12
NUM_BIDS = 12


def bid_of(action: int) -> tuple[int, int]:
    """(quantity, face) for a bid action; bids are ordered by quantity then face."""
    return action // 6 + 1, action % 6 + 1


class LiarsDiceState(State):
    __slots__ = ("dice", "bids", "challenged")

    def __init__(self, game, history=(), dice=(), bids=(), challenged=False):
        super().__init__(game, history)
        self.dice = dice
        self.bids = bids
        self.challenged = challenged

    def current_player(self):
        if len(self.dice) < 2:
            return CHANCE
        if self.challenged:
            return TERMINAL
        return len(self.bids) % 2

    def chance_outcomes(self):
        if len(self.dice) >= 2:
            raise ContractError("not a chance node")
        return [(f, 1.0 / 6) for f in range(6)]

    def _legal_actions(self):
        start = self.bids[-1] + 1 if self.bids else 0
        legal = list(range(start, NUM_BIDS))
        if self.bids:
            legal.append(LIAR)
        return legal

    def _apply(self, actor, action):
        history = self.history + ((actor, action),)
        if actor == CHANCE:
            return LiarsDiceState(self.game, history, self.dice + (action,))
        if action == LIAR:
            return LiarsDiceState(self.game, history, self.dice, self.bids, True)
        return LiarsDiceState(self.game, history, self.dice, self.bids + (action,))

    def _returns(self):
        challenger = len(self.bids) % 2
        quantity, face = bid_of(self.bids[-1])
        count = sum(1 for d in self.dice if d + 1 == face)
        loser = challenger if count >= quantity else 1 - challenger
        return (-1.0, 1.0) if loser == 0 else (1.0, -1.0)

    def _key(self, player):
        if self.game.imperfect_recall:
            cur = str(self.bids[-1]) if self.bids else "-"
            return f"{player}|{self.dice[player]}|{cur}".encode()
        seq = ",".join(str(b) for b in self.bids)
        return f"{player}|{self.dice[player]}|{seq}".encode()

    def _encode(self, player):
        x = np.zeros(20)
        x[player] = 1.0
        x[2 + self.dice[player]] = 1.0
        if self.game.imperfect_recall:
            if self.bids:
                x[8 + self.bids[-1]] = 1.0
        else:
            for b in self.bids:
                x[8 + b] = 1.0
        return x


class LiarsDice(Game):
    """Liar's dice with one six-sided die per player and no wild faces.

    Actions 0..11 bid (quantity, face) = (a // 6 + 1, a % 6 + 1); action 12
    challenges the standing bid.  The loser of the challenge gets -1.
    With ``imperfect_recall`` the information state keeps only the own die
    and the current bid.
    """

    num_actions = 13
    feature_size = 20
    max_utility = 1.0
    max_depth = 2 + NUM_BIDS + 1

    def __init__(self, imperfect_recall: bool = False):
        self.imperfect_recall = imperfect_recall
        self.perfect_recall = not imperfect_recall
        self.name = "liars_dice_ir" if imperfect_recall else "liars_dice"

    def new_initial_state(self):
        return LiarsDiceState(self)


# --------------------------------------------------------------------- Maze

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
DIRECTIONS = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}
MAZE_ROWS, MAZE_COLS = 4, 7
# Cells are (row, col), 1-based, row 1 at the top.
MAZE_HUMAN_START = (4, 3)
MAZE_SWITCH_CELL = (3, 6)
MAZE_SHELTER = (1, 5)
MAZE_MONSTER_START = (1, 3)
MAZE_MAX_STEPS = 12


def _in_grid(cell):
    return 1 <= cell[0] <= MAZE_ROWS and 1 <= cell[1] <= MAZE_COLS


def maze_step(cell, action):
    """Destination of ``action`` from ``cell``; actions 4..7 move two cells."""
    dr, dc = DIRECTIONS[action % 4]
    k = action // 4 + 1
    return cell[0] + k * dr, cell[1] + k * dc


def cell_index(cell) -> int:
    return (cell[0] - 1) * MAZE_COLS + (cell[1] - 1)


class MazeState(State):
    __slots__ = ("human", "monster", "steps", "to_move", "outcome")

    def __init__(self, game, history=(), human=MAZE_HUMAN_START,
                 monster=MAZE_MONSTER_START, steps=0, to_move=0, outcome=None):
        super().__init__(game, history)
        self.human = human
        self.monster = monster
        self.steps = steps
        self.to_move = to_move
        self.outcome = outcome

    def current_player(self):
        return TERMINAL if self.outcome is not None else self.to_move

    def _legal_actions(self):
        if self.to_move == 0:
            return [a for a in range(4) if _in_grid(maze_step(self.human, a))]
        return [a for a in range(8) if _in_grid(maze_step(self.monster, a))]

    def _apply(self, actor, action):
        history = self.history + ((actor, action),)
        g = self.game
        if actor == 0:
            human = maze_step(self.human, action)
            outcome = None
            if human == g.shelter:
                outcome = (1.0, -1.0)
            elif human == self.monster:
                outcome = (-1.0, 1.0)
            return MazeState(g, history, human, self.monster, self.steps, 1, outcome)
        monster = maze_step(self.monster, action)
        steps = self.steps + 1
        outcome = None
        if monster == self.human:
            outcome = (-1.0, 1.0)
        elif steps >= g.max_steps:
            outcome = (0.0, 0.0)
        return MazeState(g, history, self.human, monster, steps, 0, outcome)

    def _returns(self):
        return self.outcome

    def _key(self, player):
        moves = "".join(str(a) for _, a in self.history)
        return f"{player}|{moves}".encode()

    def _encode(self, player):
        x = np.zeros(58)
        x[player] = 1.0
        x[2 + cell_index(self.human)] = 1.0
        x[30 + cell_index(self.monster)] = 1.0
        return x


class Maze(Game):
    """7x4 grid pursuit game, human (player 0) against monster (player 1).

    The human moves one cell (actions 0..3 = up, down, left, right).  The
    monster then moves one cell (actions 0..3) or two cells in one direction
    (actions 4..7) and sees the human's new cell.  The human wins (+1) on
    reaching the shelter and loses (-1) when both share a cell.  After
    ``max_steps`` move pairs the game is a draw.
    """

    name = "maze"
    num_actions = 8
    feature_size = 58
    max_utility = 1.0
    has_chance = False

    def __init__(self, max_steps: int = MAZE_MAX_STEPS, shelter=MAZE_SHELTER,
                 monster_start=MAZE_MONSTER_START):
        if max_steps < 1:
            raise ConfigError("maze max_steps must be positive")
        self.max_steps = max_steps
        self.shelter = tuple(shelter)
        self.monster_start = tuple(monster_start)
        self.max_depth = 2 * max_steps

    def params(self):
        return {"max_steps": self.max_steps}

    def new_initial_state(self):
        return MazeState(self, monster=self.monster_start)


def decode_maze_features(x: np.ndarray):
    """Recover (human cell, monster cell) from a maze feature vector."""
    h = int(np.argmax(x[2:30]))
    m = int(np.argmax(x[30:58]))
    return (h // MAZE_COLS + 1, h % MAZE_COLS + 1), (m // MAZE_COLS + 1, m % MAZE_COLS + 1)


# ------------------------------------------------------------- matrix games

class MatrixState(State):
    __slots__ = ("row", "col")

    def __init__(self, game, history=(), row=None, col=None):
        super().__init__(game, history)
        self.row = row
        self.col = col

    def current_player(self):
        if self.col is not None:
            return TERMINAL
        return 0 if self.row is None else 1

    def _legal_actions(self):
        n = self.game.payoff.shape[0 if self.row is None else 1]
        return list(range(n))

    def _apply(self, actor, action):
        history = self.history + ((actor, action),)
        if actor == 0:
            return MatrixState(self.game, history, action)
        return MatrixState(self.game, history, self.row, action)

    def _returns(self):
        u = float(self.game.payoff[self.row, self.col])
        return (u, -u)

    def _key(self, player):
        return f"{player}".encode()

    def _encode(self, player):
        x = np.zeros(2)
        x[player] = 1.0
        return x


class MatrixGame(Game):
    """A zero-sum matrix game played as a two-node tree; player 1 moves blind."""

    name = "matrix"
    feature_size = 2
    max_depth = 2
    has_chance = False

    def __init__(self, payoff):
        self.payoff = np.asarray(payoff, dtype=float)
        if self.payoff.ndim != 2:
            raise ConfigError("matrix game payoff must be 2-D")
        self.num_actions = max(self.payoff.shape)
        self.max_utility = float(np.abs(self.payoff).max())

    def params(self):
        return {"payoff": self.payoff.tolist()}

    def new_initial_state(self):
        return MatrixState(self)


# ----------------------------------------------------------------- registry

GAMES = {
    "kuhn": KuhnPoker,
    "leduc": LeducPoker,
    "goofspiel5": lambda num_cards=5: Goofspiel(num_cards),
    "goofspiel": Goofspiel,
    "liars_dice": lambda: LiarsDice(imperfect_recall=False),
    "liars_dice_ir": lambda: LiarsDice(imperfect_recall=True),
    "maze": Maze,
}


def load_game(game_id: str, **params) -> Game:
    """Build a registered game by id, e.g. ``load_game("goofspiel5")``."""
    try:
        factory = GAMES[game_id]
    except KeyError:
        raise ConfigError(f"unknown game id {game_id!r}; known: {sorted(GAMES)}") from None
    try:
        game = factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {game_id}: {exc}") from None
    game.game_id = game_id
    return game


def new_initial_state(game: Game) -> State:
    return game.new_initial_state()


def sample_chance(state: State, rng: np.random.Generator) -> int:
    outcomes = state.chance_outcomes()
    probs = np.array([p for _, p in outcomes])
    return outcomes[int(rng.choice(len(outcomes), p=probs))][0]
