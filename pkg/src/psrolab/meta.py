"""Empirical restricted-game payoff matrix and zero-sum meta-Nash solving."""

from __future__ import annotations

import csv
import warnings
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from psrolab.errors import ContractError
from psrolab.evaluation import game_tree, policy_value
from psrolab.rollout import mean_returns


class PayoffMatrix:
    """Player-0 mean returns and episode counts; count 0 marks a missing entry."""

    def __init__(self, rows: int = 0, cols: int = 0):
        self.means = np.zeros((rows, cols))
        self.counts = np.zeros((rows, cols), dtype=int)

    @property
    def shape(self):
        return self.means.shape

    def resize(self, rows: int, cols: int):
        r0, c0 = self.shape
        means = np.zeros((rows, cols))
        counts = np.zeros((rows, cols), dtype=int)
        r, c = min(r0, rows), min(c0, cols)
        means[:r, :c] = self.means[:r, :c]
        counts[:r, :c] = self.counts[:r, :c]
        self.means, self.counts = means, counts

    def missing(self) -> np.ndarray:
        return self.counts == 0

    def is_complete(self) -> bool:
        return not self.missing().any()

    def copy(self) -> "PayoffMatrix":
        m = PayoffMatrix()
        m.means, m.counts = self.means.copy(), self.counts.copy()
        return m

    def save(self, path):
        path = Path(path)
        _write_matrix(path, self.means, "{:.17g}")
        _write_matrix(counts_path(path), self.counts, "{:d}")

    @classmethod
    def load(cls, path) -> "PayoffMatrix":
        path = Path(path)
        m = cls()
        m.means = _read_matrix(path, float)
        m.counts = _read_matrix(counts_path(path), int).reshape(m.means.shape)
        return m


def counts_path(path: Path) -> Path:
    return path.with_name(path.stem + ".counts.csv")


def _write_matrix(path, values, fmt):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(values):
            w.writerow([fmt.format(v) for v in row])


def _read_matrix(path, dtype):
    with open(path, newline="") as fh:
        rows = [[float(v) for v in r] for r in csv.reader(fh) if r]
    return np.array(rows, dtype=float).reshape(len(rows), -1 if rows else 0).astype(dtype)


def save_strategy(path, sigma):
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerow([f"{v:.17g}" for v in sigma])


def load_strategy(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([float(v) for v in next(csv.reader(fh))])


def fill_missing(matrix: PayoffMatrix, game, populations, episodes_per_entry: int, seed: int,
                 estimator: str = "sample") -> PayoffMatrix:
    """Evaluate every entry with fewer than ``episodes_per_entry`` episodes.

    ``populations`` holds the two players' policy lists.  With the ``sample``
    estimator an entry is the Monte-Carlo mean of player 0's return with both
    policies playing their deployed action choice; each entry draws from its own
    stream seeded by (seed, row, col), and partially filled entries are topped
    up.  The ``exact`` estimator evaluates the game tree and records
    ``episodes_per_entry`` as the count.
    """
    if episodes_per_entry < 1:
        raise ContractError("episodes_per_entry must be >= 1")
    if not populations[0] or not populations[1]:
        raise ContractError("empty population")
    rows, cols = len(populations[0]), len(populations[1])
    if matrix.shape != (rows, cols):
        matrix.resize(rows, cols)
    tree = game_tree(game) if estimator == "exact" else None
    for r in range(rows):
        for c in range(cols):
            have = matrix.counts[r, c]
            if have >= episodes_per_entry:
                continue
            pols = (populations[0][r], populations[1][c])
            if estimator == "exact":
                matrix.means[r, c] = policy_value(tree, *pols)
                matrix.counts[r, c] = episodes_per_entry
                continue
            need = episodes_per_entry - have
            rng = np.random.default_rng([seed, r, c, have])
            mean, _ = mean_returns(game, pols, need, rng)
            total = have + need
            matrix.means[r, c] = (matrix.means[r, c] * have + mean * need) / total
            matrix.counts[r, c] = total
    return matrix


def matrix_exploitability(matrix, sigma_row, sigma_col) -> float:
    """max_i (M sigma_col)_i - min_j (sigma_row^T M)_j; zero exactly at an equilibrium."""
    M = np.asarray(matrix, dtype=float)
    sigma_row = np.asarray(sigma_row, dtype=float)
    sigma_col = np.asarray(sigma_col, dtype=float)
    if M.shape != (len(sigma_row), len(sigma_col)):
        raise ContractError("strategy lengths do not match the matrix")
    return max(float((M @ sigma_col).max() - (sigma_row @ M).min()), 0.0)


class MetaNash(NamedTuple):
    row: np.ndarray
    col: np.ndarray
    value: float
    gap: float
    converged: bool


def _normalize(p):
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def _lp_maximin(M):
    """Row player's maximin strategy: max v s.t. M^T x >= v, x in simplex."""
    m, n = M.shape
    c = np.zeros(m + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-M.T, np.ones((n, 1))])
    a_eq = np.zeros((1, m + 1))
    a_eq[0, :m] = 1.0
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(n), A_eq=a_eq, b_eq=[1.0],
                  bounds=[(0, None)] * m + [(None, None)], method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    return _normalize(res.x[:m])


def _regret_matching(M, tol, max_iter):
    """Alternating regret-matching+ with linearly weighted averages."""
    m, n = M.shape
    rx, ry = np.zeros(m), np.zeros(n)
    x, y = np.full(m, 1.0 / m), np.full(n, 1.0 / n)
    sx, sy = np.zeros(m), np.zeros(n)
    ax, ay = x, y
    for t in range(1, int(max_iter) + 1):
        ux = M @ y
        rx = np.maximum(rx + ux - x @ ux, 0.0)
        x = rx / rx.sum() if rx.sum() > 0 else np.full(m, 1.0 / m)
        sx += t * x
        uy = -(x @ M)
        ry = np.maximum(ry + uy - uy @ y, 0.0)
        y = ry / ry.sum() if ry.sum() > 0 else np.full(n, 1.0 / n)
        sy += t * y
        if t % 100 == 0 or t == max_iter:
            ax, ay = sx / sx.sum(), sy / sy.sum()
            if matrix_exploitability(M, ax, ay) <= tol:
                break
    return ax, ay


def solve_meta_nash(matrix, method: str = "lp", tol: float = 1e-6,
                    max_iter: int = 1_000_000) -> MetaNash:
    """Equilibrium of the zero-sum matrix game with player-0 payoffs ``matrix``.

    ``lp`` solves both players' maximin programs; ``regret_matching`` runs
    regret-matching+ until the gap is below ``tol`` or ``max_iter`` is hit.
    ``converged`` is False (and a warning is issued) when the gap exceeds ``tol``.
    """
    if isinstance(matrix, PayoffMatrix):
        if not matrix.is_complete():
            raise ContractError("payoff matrix has missing entries")
        matrix = matrix.means
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or 0 in M.shape:
        raise ContractError("matrix must be non-empty 2-D")
    if method == "lp":
        row, col = _lp_maximin(M), _lp_maximin(-M.T)
    elif method == "regret_matching":
        row, col = _regret_matching(M, tol, max_iter)
    else:
        raise ValueError(f"unknown meta solver {method!r}")
    gap = matrix_exploitability(M, row, col)
    converged = gap <= tol
    if not converged:
        warnings.warn(f"meta-Nash gap {gap:.3g} above tolerance {tol:g}", RuntimeWarning)
    return MetaNash(row, col, float(row @ M @ col), gap, converged)
