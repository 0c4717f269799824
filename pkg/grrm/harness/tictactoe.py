"""Tic-tac-toe endgame boards, generated by enumerating every legal game with x moving first.

The enumeration yields the 958 terminal configurations of the classic
endgame corpus, 626 of them wins for x. Cells are numbered row-major from the
upper-left corner and hold "x", "o" or "b" (blank).
"""

from __future__ import annotations

import logging
from functools import lru_cache
from typing import Sequence

import numpy as np

from grrm.errors import DataError
from grrm.finite import FiniteSpace, make_space, product_space
from grrm.transitions import BINARY_LABELS

logger = logging.getLogger(__name__)

CELLS = ("x", "o", "b")
CELL_SPACE = make_space(CELLS)
LINES = (
    (0, 1, 2), (3, 4, 5), (6, 7, 8),
    (0, 3, 6), (1, 4, 7), (2, 5, 8),
    (0, 4, 8), (2, 4, 6),
)

Board = tuple[str, ...]


def winner(board: Board) -> str | None:
    for a, b, c in LINES:
        if board[a] != "b" and board[a] == board[b] == board[c]:
            return board[a]
    return None


@lru_cache(maxsize=1)
def endgame_corpus() -> tuple[tuple[Board, int], ...]:
    """Every terminal board reachable by legal play, sorted, labeled +1 iff x won."""
    terminal: dict[Board, int] = {}
    seen: set[Board] = set()
    stack = [(("b",) * 9, "x")]
    while stack:
        board, player = stack.pop()
        if board in seen:
            continue
        seen.add(board)
        won = winner(board)
        if won is not None or "b" not in board:
            terminal[board] = 1 if won == "x" else -1
            continue
        following = "o" if player == "x" else "x"
        for cell in range(9):
            if board[cell] == "b":
                stack.append((board[:cell] + (player,) + board[cell + 1 :], following))
    corpus = tuple(sorted(terminal.items()))
    logger.debug("enumerated %d endgame boards", len(corpus))
    return corpus


def tictactoe_generate(seed: int | np.random.Generator, n: int) -> list[tuple[Board, int]]:
    """n labeled boards: without replacement up to the corpus size, with replacement beyond."""
    if n < 0:
        raise DataError("sample size must be nonnegative")
    if n == 0:
        return []
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    corpus = endgame_corpus()
    if n <= len(corpus):
        picks = rng.permutation(len(corpus))[:n]
    else:
        picks = rng.integers(0, len(corpus), size=n)
    return [corpus[i] for i in picks]


def window_space(window: Sequence[int]) -> FiniteSpace:
    return product_space(*(CELL_SPACE for _ in window))


def board_test_space(window: Sequence[int]) -> FiniteSpace:
    return product_space(window_space(window), BINARY_LABELS)


def windowed(boards: Sequence[tuple[Board, int]], window: Sequence[int]) -> list[tuple[tuple[str, ...], int]]:
    """(cells in the window, label) samples."""
    return [(tuple(board[c] for c in window), label) for board, label in boards]


def window_positions(window: Sequence[int], cells: Sequence[int]) -> tuple[int, ...]:
    """Positions of board ``cells`` inside ``window``."""
    missing = [c for c in cells if c not in window]
    if missing:
        raise DataError(f"cells {missing} are not in the window {tuple(window)}")
    return tuple(list(window).index(c) for c in cells)
