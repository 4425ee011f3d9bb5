"""
Tests for initialisation, E-step, M-step and the EM loop
"""
import json
import logging

import numpy as np
import pytest

from markermatch.exceptions import (
    DegenerateGeometryError,
    InsufficientMarkersError,
    ShapeMismatchError,
)
from markermatch.models import (
    AffineTransform,
    Configuration,
    ModelParams,
    PosteriorMatrix,
    PriorMatrix,
    Region,
)
from markermatch.services.em_engine import (
    _posterior_from_log_joint,
    converged,
    degrees_of_freedom,
    e_step,
    estimate_sigma2,
    fit_regression,
    initial_transform,
    m_step,
    observed_loglik,
    run_em,
)
from markermatch.services.geometry import bounding_region
from markermatch.services.priors import build_standard_prior


def _uniform_prior(n_mu, n_x):
    return PriorMatrix(q=np.full((n_mu + 1, n_x), 1.0 / (n_mu + 1)))


def _random_instance(rng, n_mu, n_x):
    mu = Configuration(points=rng.uniform(0, 100, (n_mu, 2)))
    x = Configuration(points=rng.uniform(0, 100, (n_x, 2)))
    q = PriorMatrix(q=rng.dirichlet(np.ones(n_mu + 1), size=n_x).T)
    return mu, x, q


def test_fit_regression_recovers_exact_affine(warp):
    """Test the marker regression is exact on noise-free markers"""
    rng = np.random.default_rng(1)
    mu = rng.uniform(0, 200, (12, 2))
    t = initial_transform(mu, warp.apply(mu))
    np.testing.assert_allclose(t.A, warp.A, atol=1e-10)
    np.testing.assert_allclose(t.b, warp.b, atol=1e-9)


def test_regression_layout():
    """Test R holds b in its first row and A' below"""
    mu = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    x = mu @ np.array([[2.0, 0.0], [1.0, 3.0]]).T + [5.0, 7.0]
    r = fit_regression(mu, x).R
    np.testing.assert_allclose(r[0], [5.0, 7.0], atol=1e-12)
    np.testing.assert_allclose(r[1:].T, [[2.0, 0.0], [1.0, 3.0]], atol=1e-12)


def test_collinear_markers_degenerate():
    """Test collinear markers cannot fix an affine transform"""
    mu = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    with pytest.raises(DegenerateGeometryError):
        initial_transform(mu, mu)


def test_too_few_markers():
    """Test d+1 markers are required"""
    mu = np.array([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(InsufficientMarkersError):
        initial_transform(mu, mu)


def test_marker_shapes_must_agree():
    """Test mu and x marker arrays must pair up"""
    with pytest.raises(ShapeMismatchError):
        fit_regression(np.zeros((4, 2)), np.zeros((5, 2)))


def test_degrees_of_freedom():
    """Test nu = dK - d^2 - d"""
    assert degrees_of_freedom(12, 2) == 18
    assert degrees_of_freedom(10, 2) == 14


def test_sigma2_uses_degrees_of_freedom(warp):
    """Test sigma^2 divides the residual sum of squares by nu"""
    rng = np.random.default_rng(2)
    mu = rng.uniform(0, 200, (12, 2))
    x = warp.apply(mu) + rng.normal(0, 2.0, mu.shape)
    t0 = initial_transform(mu, x)
    rss = np.sum((x - t0.apply(mu)) ** 2)
    assert estimate_sigma2(mu, x, t0) == pytest.approx(rss / 18)


def test_sigma2_zero_on_exact_data(warp):
    """Test exact affine markers give sigma^2 = 0"""
    mu = np.random.default_rng(3).uniform(0, 200, (12, 2))
    x = warp.apply(mu)
    assert estimate_sigma2(mu, x, initial_transform(mu, x)) == pytest.approx(0.0, abs=1e-18)


def test_sigma2_needs_spare_markers():
    """Test sigma^2 needs more markers than parameters"""
    mu = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(InsufficientMarkersError):
        estimate_sigma2(mu, mu, AffineTransform.identity(2))


def test_posterior_rows_sum_to_one():
    """Test E-step rows are distributions"""
    rng = np.random.default_rng(4)
    mu, x, q = _random_instance(rng, 7, 9)
    omega = bounding_region(x.points, 5.0)
    p = e_step(x, mu, AffineTransform.identity(2), q, 25.0, omega)
    assert p.shape == (9, 8)
    np.testing.assert_allclose(p.p.sum(axis=1), 1.0, rtol=0, atol=1e-10)


def test_empty_row_goes_unmatched(caplog):
    """Test a point with no candidate at all is assigned to the unmatched row"""
    log_joint = np.array([[-1.0, -2.0, -np.inf], [-np.inf, -np.inf, -np.inf]])
    with caplog.at_level(logging.WARNING):
        p = _posterior_from_log_joint(log_joint)
    np.testing.assert_array_equal(p[1], [1.0, 0.0, 0.0])
    assert "marked unmatched" in caplog.text


def test_e_step_shape_mismatch():
    """Test the prior must be (K+m+1) x (K+n)"""
    rng = np.random.default_rng(5)
    mu, x, _ = _random_instance(rng, 4, 4)
    omega = bounding_region(x.points, 5.0)
    with pytest.raises(ShapeMismatchError):
        e_step(x, mu, AffineTransform.identity(2), _uniform_prior(3, 4), 1.0, omega)


def test_m_step_normal_equations():
    """Test the M-step zeroes the weighted least-squares gradient"""
    rng = np.random.default_rng(6)
    for _ in range(20):
        n_mu, n_x = rng.integers(3, 15, size=2)
        mu = Configuration(points=rng.uniform(0, 100, (n_mu, 2)))
        x = Configuration(points=rng.uniform(0, 100, (n_x, 2)))
        p = PosteriorMatrix(p=rng.dirichlet(np.ones(n_mu + 1), size=n_x))
        t = m_step(x, mu, p)

        w = p.p[:, 1:]
        residual = x.points[:, None, :] - t.apply(mu.points)[None, :, :]
        grad_b = np.einsum("ji,jik->k", w, residual)
        grad_a = np.einsum("ji,jik,il->kl", w, residual, mu.points)
        assert np.max(np.abs(grad_b)) < 1e-8
        assert np.max(np.abs(grad_a)) < 1e-8 * 100


def test_m_step_translation_equivariance():
    """Test shifting x shifts b by the same amount and leaves A alone"""
    rng = np.random.default_rng(7)
    mu = Configuration(points=rng.uniform(0, 100, (8, 2)))
    x = Configuration(points=rng.uniform(0, 100, (10, 2)))
    p = PosteriorMatrix(p=rng.dirichlet(np.ones(9), size=10))
    shift = np.array([13.0, -4.5])
    t = m_step(x, mu, p)
    t_shifted = m_step(x.with_points(x.points + shift), mu, p)
    np.testing.assert_allclose(t_shifted.A, t.A, atol=1e-9)
    np.testing.assert_allclose(t_shifted.b, t.b + shift, atol=1e-9)


def test_m_step_all_unmatched():
    """Test there is nothing to fit when every point is unmatched"""
    mu = Configuration(points=[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    x = Configuration(points=[[0.0, 0.0], [1.0, 1.0]])
    p = PosteriorMatrix(p=np.array([[1.0, 0, 0, 0], [1.0, 0, 0, 0]]))
    with pytest.raises(DegenerateGeometryError):
        m_step(x, mu, p)


def test_converged_threshold():
    """Test the mean squared change is compared with 10^-l"""
    a = PosteriorMatrix(p=np.array([[0.5, 0.5], [0.2, 0.8]]))
    b = PosteriorMatrix(p=np.array([[0.5 + 1e-4, 0.5 - 1e-4], [0.2, 0.8]]))
    # mean squared change is 2e-8 / 4 = 5e-9
    assert converged(a, a, 8)
    assert converged(a, b, 8)
    assert not converged(a, b, 9)


def test_em_fixed_point_on_identical_configurations():
    """Test aligning a configuration with itself stays at the identity"""
    grid = np.array([[10.0 * i, 12.0 * j] for i in range(5) for j in range(4)])
    c = Configuration(points=grid)
    q = _uniform_prior(c.n_points, c.n_points)
    omega = bounding_region(grid, 3.0)
    params = ModelParams(sigma2=1.0, sigma_star2=1.0)
    state = run_em(c, c, q, params, AffineTransform.identity(2), 1.0, omega)
    assert state.converged
    np.testing.assert_allclose(state.transform.A, np.eye(2), atol=1e-6)
    np.testing.assert_allclose(state.transform.b, [0.0, 0.0], atol=1e-6)


def test_em_recovers_planted_transform(make_pair, warp):
    """Test exact recovery with correct labels and no noise"""
    mu, x = make_pair(seed=11, n_points=40).configurations()
    t0 = initial_transform(mu.marker_points(), x.marker_points())
    omega = bounding_region(x.points, 1.0)
    q = build_standard_prior(mu, x, omega, sigma_star2=0.01)
    params = ModelParams(sigma2=0.01, sigma_star2=0.01)
    state = run_em(x, mu, q, params, t0, 0.01, omega)
    assert np.max(np.abs(state.transform.A - warp.A)) < 1e-6
    assert np.max(np.abs(state.transform.b - warp.b)) < 1e-6


def test_em_log_likelihood_never_decreases():
    """Test EM ascent and row normalisation on random instances"""
    rng = np.random.default_rng(8)
    for _ in range(100):
        n_mu, n_x = rng.integers(4, 51, size=2)
        mu = Configuration(points=rng.uniform(0, 100, (n_mu, 2)))
        shift = rng.normal(0, 3, 2)
        x_points = np.vstack(
            [mu.points[: min(n_mu, n_x)] + shift, rng.uniform(0, 100, (max(0, n_x - n_mu), 2))]
        )
        x = Configuration(points=x_points + rng.normal(0, 1, x_points.shape))
        q = _uniform_prior(n_mu, n_x)
        omega = bounding_region(x.points, 10.0)
        sigma2 = float(rng.uniform(4.0, 50.0))
        params = ModelParams(sigma2=sigma2, sigma_star2=sigma2, max_iterations=60)
        t0 = AffineTransform.identity(2)
        records = []
        state = run_em(x, mu, q, params, t0, sigma2, omega, callback=records.append)

        previous = observed_loglik(x, mu, t0, q, sigma2, omega)
        for record in records:
            assert record.loglik >= previous - 1e-9 * max(1.0, abs(previous))
            previous = record.loglik
        np.testing.assert_allclose(state.posteriors.p.sum(axis=1), 1.0, rtol=0, atol=1e-10)


def test_em_reports_non_convergence(caplog):
    """Test hitting the iteration cap is reported, not raised"""
    rng = np.random.default_rng(9)
    mu, x, q = _random_instance(rng, 10, 12)
    omega = bounding_region(x.points, 10.0)
    params = ModelParams(sigma2=30.0, sigma_star2=30.0, max_iterations=1, convergence_exponent=30)
    with caplog.at_level(logging.WARNING):
        state = run_em(x, mu, q, params, AffineTransform.identity(2), 30.0, omega)
    assert not state.converged
    assert state.iteration == 1
    assert len(state.trace) == 1
    assert "without converging" in caplog.text


def test_em_trace_logged_as_json(caplog):
    """Test each iteration is logged as JSON on the trace logger"""
    rng = np.random.default_rng(10)
    mu, x, q = _random_instance(rng, 5, 5)
    omega = bounding_region(x.points, 10.0)
    params = ModelParams(sigma2=30.0, sigma_star2=30.0, max_iterations=3)
    with caplog.at_level(logging.DEBUG, logger="markermatch.trace"):
        run_em(x, mu, q, params, AffineTransform.identity(2), 30.0, omega)
    trace_lines = [r.message for r in caplog.records if r.name == "markermatch.trace"]
    assert trace_lines
    record = json.loads(trace_lines[0])
    assert record["iteration"] == 1
    assert "loglik" in record


def test_e_step_prefers_nearest_point():
    """Test the posterior peaks on the coincident mu point"""
    c = Configuration(points=[[0.0, 0.0], [5.0, 5.0], [9.0, 1.0]])
    omega = Region(lower=[-5.0, -5.0], upper=[15.0, 15.0])
    p = e_step(c, c, AffineTransform.identity(2), _uniform_prior(3, 3), 1.0, omega)
    assert np.argmax(p.p[1]) == 2


def test_observed_loglik_background_only():
    """Test a lone x point whose prior is all on the unmatched row"""
    x = Configuration(points=[[2.0, 3.0]])
    mu = Configuration(points=[[2.0, 3.0]])
    omega = Region(lower=[0.0, 0.0], upper=[10.0, 10.0])
    q = PriorMatrix(q=[[1.0], [0.0]])
    value = observed_loglik(x, mu, AffineTransform.identity(2), q, 1.0, omega)
    assert value == pytest.approx(np.log(0.01))


def test_observed_loglik_adds_over_points():
    """Test the log-likelihood of two points is the sum of their separate values"""
    rng = np.random.default_rng(12)
    mu = Configuration(points=rng.uniform(0, 50, (4, 2)))
    x_points = rng.uniform(0, 50, (2, 2))
    q = rng.dirichlet(np.ones(5), size=2).T
    omega = Region(lower=[-10.0, -10.0], upper=[60.0, 60.0])
    t = AffineTransform(A=np.array([[1.1, 0.1], [0.0, 0.9]]), b=np.array([1.0, -2.0]))

    both = observed_loglik(Configuration(points=x_points), mu, t, PriorMatrix(q=q), 6.0, omega)
    separate = sum(
        observed_loglik(
            Configuration(points=x_points[[j]]), mu, t, PriorMatrix(q=q[:, [j]]), 6.0, omega
        )
        for j in range(2)
    )
    assert both == pytest.approx(separate, rel=1e-12)


def test_one_hot_prior_gives_one_hot_posterior():
    """Test a prior certain of every match leaves nothing for the E-step to move"""
    rng = np.random.default_rng(13)
    mu = Configuration(points=rng.uniform(0, 100, (5, 2)))
    x = Configuration(points=rng.uniform(0, 100, (4, 2)))
    rows = [2, 0, 5, 1]
    q = np.zeros((6, 4))
    q[rows, range(4)] = 1.0
    omega = bounding_region(x.points, 10.0)
    p = e_step(x, mu, AffineTransform.identity(2), PriorMatrix(q=q), 25.0, omega)
    np.testing.assert_array_equal(p.p, q.T)


def test_sigma2_estimate_consistent():
    """Test sigma^2 from 50 markers with noise sd 2 lands near 4 across 100 seeds"""
    estimates = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        mu_m = rng.uniform(0, 300, (50, 2))
        x_m = mu_m @ np.array([[1.02, 0.03], [-0.05, 0.98]]) + [5.0, -3.0]
        x_m = x_m + rng.normal(0, 2.0, mu_m.shape)
        estimates.append(estimate_sigma2(mu_m, x_m, initial_transform(mu_m, x_m)))
    estimates = np.array(estimates)
    assert np.mean(estimates) == pytest.approx(4.0, rel=0.05)
    assert np.sum(np.abs(estimates - 4.0) <= 1.2) >= 90
