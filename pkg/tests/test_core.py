import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lancbio.core import (
    CountingOracles,
    EvalCounters,
    dense_hessian_yy,
    exact_hypergrad,
    hypergrad_estimate,
    lower_gd_step,
    solve_lower_level,
)
from lancbio.errors import DimensionMismatch
from lancbio.kernels import finite_diff_gradient
from lancbio.problems import QuadraticBilevel, build_problem, make_quadratic


def identity_problem(dx=2, dy=2):
    """g = 1/2 |y|^2 - y.x, f = c.y + 1/2 |x|^2 ; hand-checkable."""
    return QuadraticBilevel(
        A=np.eye(dy), B=np.eye(dy, dx), H=np.zeros((dy, dy)), c=np.ones(dy),
        P=np.eye(dx), e=np.zeros(dx),
    )


def test_hypergrad_estimate_hand_example():
    P = identity_problem()
    x, y = np.array([1.0, 2.0]), np.zeros(2)
    est = hypergrad_estimate(P, x, y, np.ones(2))
    # grad_x f - (-B^T) v = x + v
    np.testing.assert_allclose(est.grad, [2.0, 3.0])
    assert est.residual_norm == 0.0


def test_hypergrad_estimate_residual():
    P = identity_problem()
    est = hypergrad_estimate(P, np.zeros(2), np.zeros(2), np.array([3.0, 1.0]))
    assert est.residual_norm == pytest.approx(2.0)


def test_hypergrad_estimate_reuses_supplied_terms():
    counted = CountingOracles(identity_problem())
    x = y = v = np.zeros(2)
    hypergrad_estimate(counted, x, y, v)
    assert counted.counters.n_hvp == 1 and counted.counters.n_grad_f == 2
    hypergrad_estimate(counted, x, y, v, b=np.ones(2), Av=np.zeros(2))
    c = counted.counters
    assert (c.n_hvp, c.n_jvp, c.n_grad_f) == (1, 2, 3)


def test_hypergrad_estimate_dimension_check():
    with pytest.raises(DimensionMismatch):
        hypergrad_estimate(identity_problem(), np.zeros(2), np.zeros(3), np.zeros(2))


def test_counters_snapshot_is_independent():
    c = EvalCounters(n_grad_f=1, n_grad_g=2)
    snap = c.snapshot()
    c.n_grad_f += 5
    assert snap.n_grad == 3 and c.n_grad == 8


@pytest.mark.parametrize("seed", range(3))
def test_exact_hypergrad_matches_quadratic_closed_form(seed):
    P = make_quadratic(dx=4, dy=12, cond=50.0, seed=seed)
    x = np.random.default_rng(seed).standard_normal(4)
    np.testing.assert_allclose(exact_hypergrad(P, x), P.hypergrad(x), rtol=1e-8, atol=1e-10)


def test_exact_hypergrad_matches_finite_difference_of_phi():
    P = build_problem("synthetic", seed=0, d=20)
    rng = np.random.default_rng(1)
    x = 0.5 * rng.standard_normal(20)
    y_ref = solve_lower_level(P, x)

    def phi(z):
        return P.f_value(z, solve_lower_level(P, z, y0=y_ref, tol=1e-12))

    fd = finite_diff_gradient(phi, x, h=1e-5)
    exact = exact_hypergrad(P, x, y0=y_ref)
    assert np.linalg.norm(exact - fd) <= 1e-4 * max(1.0, np.linalg.norm(fd))


def test_lower_gd_step_contracts_at_optimal_rate():
    P = make_quadratic(dx=3, dy=15, cond=20.0, seed=4)
    mu, L = np.linalg.eigvalsh(P.A)[[0, -1]]
    theta = 2.0 / (mu + L)
    rate = (L - mu) / (L + mu)
    x = np.ones(3)
    y_star = P.solution_y(x)
    y = np.random.default_rng(0).standard_normal(15)
    for _ in range(10):
        y_next = lower_gd_step(P, x, y, theta)
        assert np.linalg.norm(y_next - y_star) <= rate * np.linalg.norm(y - y_star) * (1 + 1e-12)
        y = y_next


def test_lower_gd_step_rejects_nonpositive_theta():
    P = identity_problem()
    with pytest.raises(ValueError):
        lower_gd_step(P, np.zeros(2), np.zeros(2), 0.0)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["synthetic", "nonconvex_sin", "hyperclean", "logreg"]),
       st.integers(0, 2**31 - 1))
def test_hvp_symmetric(name, seed):
    small = {
        "synthetic": {"d": 10},
        "nonconvex_sin": {"d": 10},
        "hyperclean": {"n_train": 20, "n_val": 10, "n_test": 0, "dim": 4, "classes": 3},
        "logreg": {"n_train": 20, "n_val": 10, "n_test": 0, "dim": 4, "classes": 3},
    }[name]
    P = build_problem(name, seed=0, **small)
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(P.dx), rng.standard_normal(P.dy)
    u, v = rng.standard_normal(P.dy), rng.standard_normal(P.dy)
    lhs, rhs = u @ P.hvp_gyy(x, y, v), v @ P.hvp_gyy(x, y, u)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_dense_hessian_of_quadratic():
    P = make_quadratic(dx=2, dy=6, seed=2)
    np.testing.assert_allclose(dense_hessian_yy(P, np.zeros(2), np.zeros(6)), P.A, atol=1e-12)
