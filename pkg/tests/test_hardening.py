"""
Tests for hardening posteriors into matchings
"""
import numpy as np
import pytest

from markermatch.exceptions import InfeasibleMatchingError
from markermatch.models import HardeningProblem, MatchingMode, MatchMatrix, PosteriorMatrix
from markermatch.services.hardening import harden, matching_objective


def _brute_force(log_post):
    """Best hard assignment; the first found wins ties, in lexicographic row order."""
    n, r_plus = log_post.shape
    best = [-np.inf, None]

    def visit(j, used, assignment):
        if j == n:
            total = 0.0
            for jj, i in enumerate(assignment):
                total += float(log_post[jj, i])
            if total > best[0]:
                best[0], best[1] = total, tuple(assignment)
            return
        for i in range(r_plus):
            if i > 0 and i in used:
                continue
            if not np.isfinite(log_post[j, i]):
                continue
            visit(j + 1, used | ({i} if i > 0 else set()), assignment + [i])

    visit(0, frozenset(), [])
    return best[0], best[1]


def test_hard_matches_brute_force_on_random_posteriors():
    """Test optimality and the tie rule against enumeration on continuous posteriors"""
    rng = np.random.default_rng(20)
    for _ in range(300):
        n = int(rng.integers(1, 7))
        r = int(rng.integers(1, 7))
        p = rng.dirichlet(np.full(r + 1, 0.7), size=n)
        problem = HardeningProblem.from_posterior(PosteriorMatrix(p=p))
        matching = harden(problem)
        best, assignment = _brute_force(problem.log_post)
        assert matching.assignment == assignment
        assert matching_objective(matching, problem) == best


def test_hard_matches_brute_force_with_ties():
    """Test the lexicographically smallest optimum is chosen among exact ties"""
    rng = np.random.default_rng(21)
    for _ in range(200):
        n = int(rng.integers(1, 7))
        r = int(rng.integers(1, 7))
        log_post = -rng.integers(0, 3, size=(n, r + 1)).astype(float)
        log_post[rng.uniform(size=log_post.shape) < 0.2] = -np.inf
        log_post[:, 0] = np.where(np.isfinite(log_post[:, 0]), log_post[:, 0], -2.0)
        problem = HardeningProblem(log_post=log_post)
        matching = harden(problem)
        best, assignment = _brute_force(log_post)
        assert matching.assignment == assignment
        assert matching_objective(matching, problem) == best


def test_hard_matching_is_one_to_one():
    """Test two points wanting the same mu point get one each at most"""
    p = np.array([[0.05, 0.9, 0.05], [0.05, 0.9, 0.05]])
    matching = harden(HardeningProblem.from_posterior(PosteriorMatrix(p=p)))
    assert matching.is_one_to_one()
    assert matching.assignment == (0, 1)


def test_soft_matching_takes_row_argmax():
    """Test soft mode lets several points share one mu point"""
    p = np.array([[0.05, 0.9, 0.05], [0.05, 0.9, 0.05], [0.6, 0.2, 0.2]])
    problem = HardeningProblem.from_posterior(PosteriorMatrix(p=p), mode=MatchingMode.SOFT)
    matching = harden(problem)
    assert matching.assignment == (1, 1, 0)


def test_soft_ties_go_to_lowest_row():
    """Test exact ties resolve to the lowest row index"""
    p = np.array([[0.2, 0.4, 0.4]])
    problem = HardeningProblem.from_posterior(PosteriorMatrix(p=p), mode=MatchingMode.SOFT)
    assert harden(problem).assignment == (1,)


def test_point_without_candidates_is_infeasible():
    """Test a row of zero probabilities cannot be matched"""
    log_post = np.array([[-1.0, -2.0], [-np.inf, -np.inf]])
    with pytest.raises(InfeasibleMatchingError):
        harden(HardeningProblem(log_post=log_post))


def test_hard_constraints_infeasible():
    """Test two points that can only take the same mu point"""
    log_post = np.array([[-np.inf, -0.1, -np.inf], [-np.inf, -0.2, -np.inf]])
    with pytest.raises(InfeasibleMatchingError):
        harden(HardeningProblem(log_post=log_post))
    soft = harden(HardeningProblem(log_post=log_post, mode=MatchingMode.SOFT))
    assert soft.assignment == (1, 1)


def test_objective_rejects_shared_rows_in_hard_mode():
    """Test the objective is only defined for feasible matchings"""
    problem = HardeningProblem(log_post=np.log(np.array([[0.1, 0.9], [0.1, 0.9]])))
    with pytest.raises(InfeasibleMatchingError):
        matching_objective(MatchMatrix(assignment=(1, 1), n_rows=2), problem)


def test_large_problem_skips_tie_search():
    """Test a problem above the tie-break threshold still gives a one-to-one optimum"""
    rng = np.random.default_rng(22)
    p = rng.dirichlet(np.ones(31), size=30)
    problem = HardeningProblem.from_posterior(PosteriorMatrix(p=p))
    matching = harden(problem, tie_break_max_cells=0)
    assert matching.is_one_to_one()
    greedy = float(np.sum(np.log(p[:, 0])))
    assert matching_objective(matching, problem) >= greedy


def test_dense_matrix_has_one_entry_per_column():
    """Test the dense M has exactly one 1 per column"""
    matching = MatchMatrix(assignment=(0, 2, 1), n_rows=3)
    dense = matching.dense()
    assert dense.shape == (3, 3)
    np.testing.assert_array_equal(dense.sum(axis=0), [1, 1, 1])
    assert matching.matched_pairs() == [(1, 1), (2, 0)]


def test_soft_objective_at_least_hard():
    """Test dropping the one-to-one constraint never lowers the optimum"""
    rng = np.random.default_rng(22)
    for _ in range(100):
        n, r = rng.integers(1, 8, size=2)
        p = PosteriorMatrix(p=rng.dirichlet(np.full(r + 1, 0.5), size=n))
        hard = HardeningProblem.from_posterior(p, MatchingMode.HARD)
        soft = HardeningProblem.from_posterior(p, MatchingMode.SOFT)
        hard_value = matching_objective(harden(hard), hard)
        soft_value = matching_objective(harden(soft), soft)
        assert soft_value >= hard_value - 1e-12


def test_hard_matching_permutation_equivariant():
    """Test relabelling x and mu points relabels the optimal matching the same way"""
    rng = np.random.default_rng(23)
    for _ in range(50):
        n, r = (int(v) for v in rng.integers(2, 8, size=2))
        log_post = np.log(rng.dirichlet(np.ones(r + 1), size=n))
        x_perm = rng.permutation(n)
        mu_perm = rng.permutation(r)
        permuted = log_post[x_perm][:, np.concatenate([[0], mu_perm + 1])]

        original = harden(HardeningProblem(log_post=log_post)).assignment
        relabelled = harden(HardeningProblem(log_post=permuted)).assignment
        mu_inverse = np.argsort(mu_perm)
        expected = tuple(
            0 if original[j] == 0 else int(mu_inverse[original[j] - 1]) + 1 for j in x_perm
        )
        assert relabelled == expected
