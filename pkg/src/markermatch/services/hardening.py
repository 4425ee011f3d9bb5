"""
Hardening of posterior matching probabilities into a matching matrix.

Hard mode maximises sum_ij M_ij log p_ji with one row per x point and each mu row used at
most once (the unmatched row is unlimited). The constraint matrix is totally unimodular, so
a rectangular linear assignment gives the integer optimum: every x point gets a private copy
of the unmatched row. Soft mode only needs one row per x point, so a per-point argmax is
optimal.
"""
import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..config import get_settings
from ..exceptions import InfeasibleMatchingError
from ..models.matching import HardeningProblem, MatchMatrix
from ..models.run_config import MatchingMode

logger = logging.getLogger(__name__)

TIE_RTOL = 1e-12


def _check_rows(log_post: np.ndarray) -> None:
    finite = np.isfinite(log_post)
    empty = np.flatnonzero(~finite.any(axis=1))
    if empty.size:
        raise InfeasibleMatchingError(
            f"x points {empty.tolist()} have zero posterior for every row"
        )


def _solve_assignment(
    log_post: np.ndarray, fixed: Dict[int, int]
) -> Optional[Tuple[float, List[int]]]:
    """
    Best hard assignment with some columns pinned, or None if infeasible.

    Args:
        log_post: (N, R+1) log posteriors, column 0 = unmatched
        fixed: x index -> pinned row

    Returns:
        (objective, assignment) with assignment[j] in 0..R
    """
    n, r_plus = log_post.shape
    r = r_plus - 1
    used_rows = {i for i in fixed.values() if i > 0}
    free = [j for j in range(n) if j not in fixed]

    assignment = [0] * n
    for j, i in fixed.items():
        if not math.isfinite(log_post[j, i]):
            return None
        assignment[j] = i

    if free:
        free_rows = [i for i in range(1, r + 1) if i not in used_rows]
        cost = np.full((len(free), len(free_rows) + len(free)), np.inf)
        sub = -log_post[np.ix_(free, free_rows)] if free_rows else np.empty((len(free), 0))
        cost[:, : len(free_rows)] = sub
        dummy = -log_post[free, 0]
        cost[np.arange(len(free)), len(free_rows) + np.arange(len(free))] = dummy
        try:
            row_ind, col_ind = linear_sum_assignment(cost)
        except ValueError:
            return None
        for a, c in zip(row_ind, col_ind):
            if not math.isfinite(cost[a, c]):
                return None
            j = free[a]
            assignment[j] = free_rows[c] if c < len(free_rows) else 0

    return _objective(log_post, assignment), assignment


def _objective(log_post: np.ndarray, assignment: List[int]) -> float:
    """Sum in increasing j so equal assignments give bitwise-equal values."""
    total = 0.0
    for j, i in enumerate(assignment):
        total += float(log_post[j, i])
    return total


def _lexicographic_hard(log_post: np.ndarray, best: float, assignment: List[int]) -> List[int]:
    """Among optimal hard matchings, the one with the smallest (j=0, 1, ...) row sequence."""
    fixed: Dict[int, int] = {}
    tolerance = TIE_RTOL * max(1.0, abs(best))
    for j in range(log_post.shape[0]):
        chosen = assignment[j]
        used = {i for i in fixed.values() if i > 0}
        for i in range(0, chosen):
            if (i > 0 and i in used) or not math.isfinite(log_post[j, i]):
                continue
            trial = _solve_assignment(log_post, {**fixed, j: i})
            if trial is not None and trial[0] >= best - tolerance:
                chosen = i
                assignment = trial[1]
                break
        fixed[j] = chosen
    return assignment


def harden(prob: HardeningProblem, tie_break_max_cells: Optional[int] = None) -> MatchMatrix:
    """
    Optimal matching matrix for the problem's mode.

    Ties are broken towards the lexicographically smallest row sequence; in hard mode this
    search re-solves the assignment, so it only runs when the matrix has at most
    `tie_break_max_cells` cells (setting TIE_BREAK_MAX_CELLS by default).
    """
    log_post = prob.log_post
    n, r_plus = log_post.shape
    _check_rows(log_post)

    if prob.mode is MatchingMode.SOFT:
        # argmax returns the first maximum, i.e. the lowest row
        assignment = [int(i) for i in np.argmax(log_post, axis=1)] if n else []
        return MatchMatrix(assignment=tuple(assignment), n_rows=r_plus)

    solved = _solve_assignment(log_post, {})
    if solved is None:
        raise InfeasibleMatchingError("no one-to-one matching has positive probability")
    best, assignment = solved

    if tie_break_max_cells is None:
        tie_break_max_cells = get_settings().tie_break_max_cells
    if log_post.size <= tie_break_max_cells:
        assignment = _lexicographic_hard(log_post, best, assignment)

    matching = MatchMatrix(assignment=tuple(assignment), n_rows=r_plus)
    logger.debug(f"Hardened {n} x points: {matching.n_matched()} matched, objective {best:.6f}")
    return matching


def is_feasible(m: MatchMatrix, mode: MatchingMode) -> bool:
    if mode is MatchingMode.HARD:
        return m.is_one_to_one()
    return True


def matching_objective(m: MatchMatrix, prob: HardeningProblem) -> float:
    """sum_ij M_ij log P_ji for a feasible matching."""
    n, r_plus = prob.log_post.shape
    if m.n_columns != n or m.n_rows != r_plus:
        raise InfeasibleMatchingError(
            f"matching is {m.n_rows}x{m.n_columns}, problem is {r_plus}x{n}"
        )
    if not is_feasible(m, prob.mode):
        raise InfeasibleMatchingError("matching uses a mu point more than once")
    return _objective(prob.log_post, list(m.assignment))
