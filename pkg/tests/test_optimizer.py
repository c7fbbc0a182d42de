import numpy as np
import pytest

from vqsls.errors import (DomainError, EmptyDirectionsError, EvaluationError, InfeasibleWindowError,
                          NonConvergenceError, WindowEdgeError)
from vqsls.noise import CountedEvaluator, NoiseSpec
from vqsls.optimizer import (ConjugateDirections, HessianResult, LineSearchRun, SearchWindow,
                             WindowTarget, bootstrap_energy_uncertainty, finite_difference_hessian,
                             fit_polynomial_minimum, is_converged, line_search_iteration,
                             optimize_windows, powell_minimize, run_line_search, select_directions,
                             surrogate_minimize)
from vqsls.optimizer.hessian import default_fd_step

A3 = np.array([[4.0, 1.0, 0.5], [1.0, 3.0, -0.4], [0.5, -0.4, 1.5]])
C3 = np.array([0.3, -0.2, 0.5])


def bowl(x):
    d = np.asarray(x) - C3
    return 0.5 * float(d @ A3 @ d)


def rosenbrock(x):
    return float((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)


def full_directions(a):
    return select_directions(HessianResult.from_matrix(a), drop_tol=0.0)


# surrogate minimization ----------------------------------------------------

def test_surrogate_minimize_quadratic_bowl():
    res = surrogate_minimize(bowl, np.zeros(3), tol=1e-10)
    assert res.converged
    assert np.allclose(res.x, C3, atol=1e-8)


def test_surrogate_minimize_rosenbrock():
    res = surrogate_minimize(rosenbrock, [-1.2, 1.0], tol=1e-9)
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-6)
    assert res.grad_inf <= 1e-9


def test_surrogate_minimize_non_finite_cost():
    with pytest.raises(EvaluationError):
        surrogate_minimize(lambda x: np.nan, np.zeros(2))


def test_surrogate_minimize_iteration_cap_carries_best_point():
    with pytest.raises(NonConvergenceError) as err:
        surrogate_minimize(rosenbrock, [-1.2, 1.0], tol=1e-12, max_iter=3)
    assert err.value.best_x is not None and np.isfinite(err.value.best_f)
    assert err.value.best_f < rosenbrock([-1.2, 1.0])


# finite-difference Hessian --------------------------------------------------

@pytest.mark.parametrize("step", [1e-4, 1e-3, 1e-2, 1e-1])
def test_fd_hessian_exact_on_quadratic(step):
    h = finite_difference_hessian(bowl, [0.1, 0.7, -0.3], step)
    assert np.max(np.abs(h.matrix - A3)) <= 1e-6 * np.linalg.norm(A3)


def test_fd_hessian_eigen_invariants():
    h = finite_difference_hessian(bowl, np.zeros(3))
    v = h.eigenvectors
    assert np.allclose(v.T @ v, np.eye(3), atol=1e-8)
    assert np.all(np.diff(h.eigenvalues) <= 0)
    for k in range(3):
        assert np.linalg.norm(h.matrix @ v[:, k] - h.eigenvalues[k] * v[:, k]) <= 1e-6 * np.linalg.norm(h.matrix)
    assert np.array_equal(h.matrix, h.matrix.T)


def test_fd_hessian_of_quartic_at_origin_vanishes():
    h = finite_difference_hessian(lambda x: float(np.sum(np.array([1.0, 2.0, 3.0]) * x ** 4)), np.zeros(3))
    assert np.max(np.abs(h.matrix)) < 1e-4


def test_fd_hessian_counts_distinct_points():
    calls = []
    h = finite_difference_hessian(lambda x: calls.append(1) or bowl(x), np.zeros(3), 1e-3)
    assert h.n_calls == len(calls)
    # diagonal: 3 distinct points each (center shared); off-diagonal: 4 each
    assert len(calls) == 1 + 2 * 3 + 4 * 3


def test_fd_hessian_rejects_bad_step():
    with pytest.raises(DomainError):
        finite_difference_hessian(bowl, np.zeros(3), step=0.0)


def test_default_fd_step():
    assert default_fd_step([0.1, -0.5]) == pytest.approx(1e-3)
    assert default_fd_step([0.1, -4.0]) == pytest.approx(4e-3)


def test_fd_hessian_parallel_is_identical():
    x = [0.2, -0.1, 0.4]
    assert np.array_equal(finite_difference_hessian(bowl, x, jobs=1).matrix,
                          finite_difference_hessian(bowl, x, jobs=4).matrix)


def test_near_zero_eigenvalue_triggers_drop():
    # flat along (1, -1, 0)/sqrt(2): the cost depends on x0 + x1 only
    def cost(x):
        s = x[0] + x[1]
        return float(2 * s ** 2 + 3 * x[2] ** 2)

    h = finite_difference_hessian(cost, [0.1, 0.2, 0.3])
    assert np.sum(np.abs(h.eigenvalues) < 1e-4) == 1
    dirs = select_directions(h)
    assert dirs.n_dir == 2
    assert list(dirs.dropped.values()) == ["near-zero"]


# direction selection ---------------------------------------------------------

def test_select_directions_keep_top_two():
    h = HessianResult.from_matrix(np.diag([8.58, -8.26, 246.45, 118.49]))
    dirs = select_directions(h, keep_top=2)
    assert dirs.n_dir == 2
    assert np.allclose(dirs.kept_eigenvalues, [246.45, 118.49])
    assert sorted(dirs.dropped.values()) == ["negative", "truncated-by-rank"]
    assert np.allclose(np.abs(dirs.directions), np.eye(4)[:, [2, 3]])


def test_select_directions_all_equal_kept():
    assert select_directions(HessianResult.from_matrix(np.eye(5))).n_dir == 5


def test_select_directions_synthetic_spectrum():
    spectrum = [80.0] * 10 + [5.0] * 19 + [0.0]
    q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(30, 30)))
    h = HessianResult.from_matrix(q @ np.diag(spectrum) @ q.T)
    assert select_directions(h, drop_tol=1e-3).n_dir == 29
    top = select_directions(h, drop_tol=1e-3, keep_top=10)
    assert top.n_dir == 10 and np.allclose(top.kept_eigenvalues, 80.0)


def test_select_directions_empty():
    with pytest.raises(EmptyDirectionsError):
        select_directions(HessianResult.from_matrix(-np.eye(2)))
    with pytest.raises(DomainError):
        select_directions(HessianResult.from_matrix(np.eye(2)), keep_top=0)


def test_directions_round_trip():
    dirs = select_directions(HessianResult.from_matrix(np.diag([3.0, -1.0, 2.0])))
    back = ConjugateDirections.from_dict(dirs.to_dict())
    assert np.array_equal(back.directions, dirs.directions)
    assert back.dropped == dirs.dropped and back.kept_indices == dirs.kept_indices


# polynomial fits -------------------------------------------------------------

def test_fit_exact_quartic():
    x0 = 0.137
    xs = np.linspace(-1, 1, 7)
    ys = 2.0 * (xs - x0) ** 2 + 0.5 * (xs - x0) ** 3 + 0.3 * (xs - x0) ** 4 - 1.0
    f = fit_polynomial_minimum(xs, ys, 0.0, degree=4)
    assert f.x_min == pytest.approx(x0, abs=1e-9)
    assert f.e_min == pytest.approx(-1.0, abs=1e-12)
    assert f.sigma_xmin == 0.0


def test_fit_symmetric_parabola():
    xs = np.linspace(-0.5, 0.5, 7)
    assert fit_polynomial_minimum(xs, 3 * xs ** 2, 0.0, degree=2).x_min == pytest.approx(0.0, abs=1e-14)


def test_fit_without_interior_minimum_reports_edge():
    xs = np.linspace(-1, 1, 7)
    with pytest.raises(WindowEdgeError) as err:
        fit_polynomial_minimum(xs, 2 * xs, 0.0, degree=2)
    assert err.value.x_edge == -1.0 and err.value.e_edge == pytest.approx(-2.0)


def test_fit_validation():
    with pytest.raises(DomainError):
        fit_polynomial_minimum(np.linspace(-1, 1, 5), np.zeros(5), 0.1, degree=4)
    with pytest.raises(DomainError):
        fit_polynomial_minimum(np.linspace(-1, 1, 7), np.zeros(7), 0.1, degree=5)


def _mc_xmin(xs, ys, sigma, degree, trials, seed):
    """Minimum of independent numpy fits over fresh noise draws."""
    rng = np.random.default_rng(seed)
    noisy = ys[:, None] + sigma * rng.standard_normal((xs.size, trials))
    coefs = np.polyfit(xs, noisy, degree)  # descending powers, one column per trial
    out = []
    for c in coefs.T:
        r = np.roots(np.polyder(c))
        r = r[np.abs(r.imag) < 1e-12].real
        r = r[(r > xs[0]) & (r < xs[-1]) & (np.polyval(np.polyder(c, 2), r) > 0)]
        out.append(r[np.argmin(np.abs(r))] if r.size else np.nan)
    return np.array(out)


@pytest.mark.parametrize("degree", [2, 4])
def test_fit_sigma_xmin_matches_monte_carlo(degree):
    xs = np.linspace(-0.3, 0.3, 7)
    lam, sigma = 10.0, 1e-3
    ys = lam * (xs - 0.02) ** 2
    mc = _mc_xmin(xs, ys, sigma, degree, 10_000, seed=1)
    assert np.isnan(mc).mean() < 0.01
    f = fit_polynomial_minimum(xs, ys, sigma, degree=degree)
    assert f.sigma_xmin == pytest.approx(np.nanstd(mc), rel=0.15)


# windows ---------------------------------------------------------------------

def _one_dir():
    return ConjugateDirections(np.array([[1.0]]), np.array([2.0]), (0,))


def test_window_quadratic_noiseless_limit():
    w = optimize_windows(lambda x: float(x[0] ** 2), [0.0], _one_dir(), WindowTarget("noise", 1e-14))
    assert w.param_errors[0] < 1e-5
    col = w.error_tables[0][:, 0]
    assert np.isfinite(col).sum() >= 10
    assert np.all(col[np.isfinite(col)] < 1e-5)


def _mc_window_error(lam, width, noise, trials=10_000, seed=0):
    xs = np.linspace(-width, width, 7)
    mc = _mc_xmin(xs, lam * xs ** 2, noise, 4, trials, seed)
    mc = np.where(np.isnan(mc), width, mc)
    return abs(mc.mean()) + mc.std()


def test_window_error_grows_with_noise_oracle():
    errs = [_mc_window_error(1.0, 0.5, s) for s in (1e-5, 1e-4, 1e-3, 1e-2)]
    assert all(b > a for a, b in zip(errs, errs[1:]))


def test_window_tables_grow_with_noise():
    w = optimize_windows(lambda x: float(x[0] ** 2), [0.0], _one_dir(), WindowTarget("param_error", 0.05))
    table = w.error_tables[0]
    for row in table:
        # Monte Carlo jitter: allow 10% slack between adjacent noise levels
        assert np.all(row[1:] >= 0.9 * row[:-1])
        assert row[-1] > row[0]


def test_window_param_error_target_met():
    w = optimize_windows(lambda x: float(x[0] ** 2 + 0.1 * x[0] ** 4), [0.0], _one_dir(),
                         WindowTarget("param_error", 0.02))
    assert w.param_errors[0] <= 0.02
    assert w.delta_e > 0 and 0 < w.widths[0] <= np.pi / 2


def test_window_energy_error_splits_over_directions():
    dirs = ConjugateDirections(np.eye(2), np.array([4.0, 1.0]), (0, 1))
    w = optimize_windows(lambda x: float(2 * x[0] ** 2 + 0.5 * x[1] ** 2), [0.0, 0.0], dirs,
                         WindowTarget("energy_error", 1e-3))
    dtheta = np.sqrt(2 * 1e-3 / (2 * dirs.kept_eigenvalues))
    assert np.all(w.param_errors <= dtheta)


def test_window_infeasible_reports_frontier():
    # a linear cost has no minimum inside any window
    with pytest.raises(InfeasibleWindowError) as err:
        optimize_windows(lambda x: float(x[0]), [0.0], _one_dir(), WindowTarget("param_error", 1e-6))
    assert err.value.frontier["direction"] == 0
    assert len(err.value.frontier["best_error"]) == 10
    with pytest.raises(InfeasibleWindowError):
        optimize_windows(lambda x: float((x[0] - 0.5) ** 2), [0.0], _one_dir(), WindowTarget("param_error", 1e-3))


def test_window_validation():
    with pytest.raises(DomainError):
        SearchWindow([1.0], M=6)
    with pytest.raises(DomainError):
        SearchWindow([1.0], M=5, degree=4)
    with pytest.raises(DomainError):
        SearchWindow([0.0])
    with pytest.raises(DomainError):
        WindowTarget("param_error", -1.0)


def test_window_round_trip():
    w = SearchWindow([0.1, 0.2], 9, 1e-4, 3, np.array([1e-3, 2e-3]))
    back = SearchWindow.from_dict(w.to_dict())
    assert np.array_equal(back.widths, w.widths) and (back.M, back.degree, back.delta_e) == (9, 3, 1e-4)


# line search -----------------------------------------------------------------

def test_one_iteration_is_exact_on_noiseless_quadratic():
    dirs = full_directions(A3)
    window = SearchWindow(np.full(3, 2.0), M=7, degree=4)
    new, rec = line_search_iteration(bowl, np.array([0.9, 0.4, -0.6]), dirs, window)
    assert np.allclose(new, C3, atol=1e-9)
    assert rec.n_calls == 1 + (7 - 1) * 3
    assert rec.energy == pytest.approx(0.0, abs=1e-10)


def test_sequential_mode_spends_m_per_direction():
    dirs = full_directions(A3)
    window = SearchWindow(np.full(3, 2.0), M=7, degree=2)
    new, rec = line_search_iteration(bowl, np.zeros(3), dirs, window, sequential=True)
    assert rec.n_calls == 21
    assert np.allclose(new, C3, atol=1e-9)


def test_simultaneous_update_can_raise_energy():
    # strongly coupled quartic-corrected bowl searched along the coordinate axes
    b = 0.8
    a = np.full((3, 3), b) + (1 - b) * np.eye(3)

    def coupled(x):
        x = np.asarray(x)
        return float(x @ a @ x + 0.01 * np.sum(x ** 4))

    dirs = ConjugateDirections(np.eye(3), np.ones(3), (0, 1, 2))
    window = SearchWindow(np.full(3, 3.0), M=7, degree=4)
    x0 = np.ones(3)
    new, _ = line_search_iteration(coupled, x0, dirs, window)
    assert coupled(new) > coupled(x0)
    seq, _ = line_search_iteration(coupled, x0, dirs, window, sequential=True)
    assert coupled(seq) < coupled(x0)


def test_window_direction_count_mismatch():
    with pytest.raises(DomainError):
        line_search_iteration(bowl, np.zeros(3), full_directions(A3), SearchWindow([1.0, 1.0]))


def test_edge_hit_recenters_at_edge():
    dirs = ConjugateDirections(np.array([[1.0]]), np.array([2.0]), (0,))
    window = SearchWindow([0.1], M=7, degree=2)
    new, rec = line_search_iteration(lambda x: float((x[0] - 1.0) ** 2), np.zeros(1), dirs, window)
    assert rec.fits[0].at_edge
    assert new[0] == pytest.approx(0.1)


def _noisy_bowl(seed, sigma=1e-4):
    return CountedEvaluator(bowl, NoiseSpec.gaussian(sigma), seed=seed)


def test_run_counts_match_evaluator_and_converge():
    ev = _noisy_bowl(2)
    dirs = full_directions(A3)
    window = SearchWindow(np.full(3, 0.6), M=7, degree=2)
    run = run_line_search(ev, np.zeros(3), dirs, window, max_iters=6)
    assert run.total_calls == ev.counter
    assert run.converged and run.converged_iteration <= 3
    calls = [r.total_calls for r in run.iterations]
    assert calls == sorted(calls)
    assert np.allclose(run.final_center, C3, atol=0.02)


def test_run_is_bit_reproducible_across_jobs():
    dirs = full_directions(A3)
    window = SearchWindow(np.full(3, 0.6), M=7, degree=4)
    runs = [run_line_search(_noisy_bowl(7), np.zeros(3), dirs, window, max_iters=3, jobs=j) for j in (1, 4)]
    assert runs[0].to_dict() == runs[1].to_dict()


def test_resumed_run_equals_uninterrupted():
    dirs = full_directions(A3)
    window = SearchWindow(np.full(3, 0.6), M=7, degree=4)
    full = run_line_search(_noisy_bowl(5), np.zeros(3), dirs, window, max_iters=4)
    ev = _noisy_bowl(5)
    part = run_line_search(ev, np.zeros(3), dirs, window, max_iters=1)
    restored = LineSearchRun.from_dict(part.to_dict())
    ev2 = _noisy_bowl(5)
    ev2.restore(ev.counter, ev.log_rows())
    resumed = run_line_search(ev2, np.zeros(3), dirs, window, max_iters=4, run=restored)
    assert resumed.to_dict() == full.to_dict()


def test_is_converged_rule():
    from vqsls.optimizer import IterationRecord
    rec = lambda e, s: IterationRecord(1, np.zeros(1), np.zeros(1), [], e, s, 0, 0)
    assert is_converged(rec(1.0, 1e-3), rec(1.001, 1e-3))
    assert not is_converged(rec(1.0, 1e-4), rec(1.001, 1e-4))
    assert is_converged(rec(1.0, 0.0), rec(1.0, 0.0))


# bootstrap -------------------------------------------------------------------

def _single_direction_run(sigma_x, lam=3.0):
    from vqsls.optimizer import DirectionFit, IterationRecord
    dirs = ConjugateDirections(np.array([[1.0]]), np.array([2 * lam]), (0,))
    fit = DirectionFit(0.0, sigma_x, 0.0, 0.0, 0.0)
    rec = IterationRecord(1, np.zeros(1), np.zeros(1), [fit], 0.0, 0.0, 7, 7)
    return LineSearchRun(dirs, SearchWindow([0.1]), [rec])


def test_bootstrap_zero_sigma():
    out = bootstrap_energy_uncertainty(_single_direction_run(0.0), lambda x: float(x[0] ** 2))
    assert out.tolist() == [0.0]


def test_bootstrap_scale_law():
    lam, sx = 3.0, 0.02
    out = bootstrap_energy_uncertainty(_single_direction_run(sx, lam), lambda x: float(lam * x[0] ** 2),
                                       B=10_000, seed=1)
    # E = lam t^2 with t ~ N(0, sx): std = sqrt(2) lam sx^2
    assert out[0] == pytest.approx(np.sqrt(2) * lam * sx ** 2, rel=0.2)


def test_bootstrap_needs_two_samples():
    with pytest.raises(DomainError):
        bootstrap_energy_uncertainty(_single_direction_run(0.1), lambda x: 0.0, B=1)


# Powell ----------------------------------------------------------------------

def test_powell_quadratic_bowl():
    res = powell_minimize(bowl, np.zeros(3), full_directions(A3), tol=1e-8)
    assert np.allclose(res.x, C3, atol=1e-6)
    assert len(res.iterations) <= 3
    assert res.converged


def test_powell_rosenbrock():
    res = powell_minimize(rosenbrock, np.array([-1.2, 1.0]), tol=1e-10)
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-4)


def test_powell_cap_raises_with_best_point():
    with pytest.raises(NonConvergenceError) as err:
        powell_minimize(rosenbrock, np.array([-1.2, 1.0]), tol=1e-12, max_calls=20)
    assert err.value.n_calls >= 20 and err.value.best_x is not None
    res = powell_minimize(rosenbrock, np.array([-1.2, 1.0]), tol=1e-12, max_calls=20, raise_on_cap=False)
    assert not res.converged


def test_powell_counts_every_call():
    ev = _noisy_bowl(3, sigma=0.0)
    res = powell_minimize(ev, np.zeros(3), full_directions(A3))
    assert res.n_calls == ev.counter == len(res.trajectory)
    best = [f for _, _, f in res.trajectory]
    assert best == sorted(best, reverse=True)


def test_iteration_sigma_matches_repeated_noise():
    A = np.diag([4.0, 1.0, 0.25])
    cost = lambda x: 0.5 * x @ A @ x
    dirs = select_directions(HessianResult.from_matrix(A), drop_tol=0.0)
    window = SearchWindow(np.full(3, 0.6), M=7, degree=2)
    x0 = np.array([0.05, -0.1, 0.2])
    energies, sigmas = [], []
    for seed in range(300):
        ev = CountedEvaluator(cost, NoiseSpec.gaussian(1e-3), seed)
        _, rec = line_search_iteration(ev, x0, dirs, window, seed=seed)
        energies.append(rec.energy)
        sigmas.append(rec.sigma)
    assert np.mean(sigmas) == pytest.approx(np.std(energies, ddof=1), rel=0.2)
