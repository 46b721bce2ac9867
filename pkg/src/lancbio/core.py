"""Bilevel oracle contract, evaluation counters and hyper-gradient estimation.

A problem minimizes ``f(x, y*(x))`` over ``x`` where ``y*(x)`` minimizes
``g(x, .)``.  Solvers only see the first- and second-order oracles below and
never form a Hessian.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, fields

import numpy as np

from .errors import DimensionMismatch, NoConvergence
from .kernels import dense_solve


class BilevelProblem(abc.ABC):
    """Oracle interface every problem implements.

    ``hvp_gyy(x, y, v)`` returns ``grad^2_yy g(x, y) @ v`` (length ``dy``) and
    ``jvp_gxy(x, y, v)`` returns ``grad^2_xy g(x, y) @ v`` (length ``dx``).
    Implementations must be immutable after construction.
    """

    dx: int
    dy: int

    @abc.abstractmethod
    def f_value(self, x, y) -> float: ...

    @abc.abstractmethod
    def g_value(self, x, y) -> float: ...

    @abc.abstractmethod
    def grad_f_x(self, x, y) -> np.ndarray: ...

    @abc.abstractmethod
    def grad_f_y(self, x, y) -> np.ndarray: ...

    @abc.abstractmethod
    def grad_g_y(self, x, y) -> np.ndarray: ...

    @abc.abstractmethod
    def hvp_gyy(self, x, y, v) -> np.ndarray: ...

    @abc.abstractmethod
    def jvp_gxy(self, x, y, v) -> np.ndarray: ...

    def test_metric(self, x, y) -> float | None:
        """Held-out metric reported in traces (e.g. test accuracy); optional."""
        return None

    def initial_point(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros(self.dx), np.zeros(self.dy)

    def check_dims(self, x=None, y=None, v=None):
        for name, arr, want in (("x", x, self.dx), ("y", y, self.dy), ("v", v, self.dy)):
            if arr is not None and np.shape(arr) != (want,):
                raise DimensionMismatch(f"{name} has shape {np.shape(arr)}, expected ({want},)")


@dataclass
class EvalCounters:
    n_grad_f: int = 0
    n_grad_g: int = 0
    n_hvp: int = 0
    n_jvp: int = 0
    n_value: int = 0

    @property
    def n_grad(self) -> int:
        return self.n_grad_f + self.n_grad_g

    def snapshot(self) -> "EvalCounters":
        return EvalCounters(**{f.name: getattr(self, f.name) for f in fields(self)})


class CountingOracles(BilevelProblem):
    """Wraps a problem and counts every oracle call made through it."""

    def __init__(self, problem: BilevelProblem, counters: EvalCounters | None = None):
        self.problem = problem
        self.counters = counters if counters is not None else EvalCounters()
        self.dx = problem.dx
        self.dy = problem.dy

    def f_value(self, x, y):
        self.counters.n_value += 1
        return self.problem.f_value(x, y)

    def g_value(self, x, y):
        self.counters.n_value += 1
        return self.problem.g_value(x, y)

    def grad_f_x(self, x, y):
        self.counters.n_grad_f += 1
        return self.problem.grad_f_x(x, y)

    def grad_f_y(self, x, y):
        self.counters.n_grad_f += 1
        return self.problem.grad_f_y(x, y)

    def grad_g_y(self, x, y):
        self.counters.n_grad_g += 1
        return self.problem.grad_g_y(x, y)

    def hvp_gyy(self, x, y, v):
        self.counters.n_hvp += 1
        return self.problem.hvp_gyy(x, y, v)

    def jvp_gxy(self, x, y, v):
        self.counters.n_jvp += 1
        return self.problem.jvp_gxy(x, y, v)

    def test_metric(self, x, y):
        return self.problem.test_metric(x, y)

    def initial_point(self, rng):
        return self.problem.initial_point(rng)


@dataclass(frozen=True, eq=False)
class HyperGradEstimate:
    grad: np.ndarray
    residual_norm: float


def hypergrad_estimate(P: BilevelProblem, x, y, v, *, b=None, Av=None) -> HyperGradEstimate:
    """Estimate the hyper-gradient ``grad_x f - grad^2_xy g v`` at ``(x, y)``.

    ``residual_norm`` is ``||A v - b||`` with ``A = grad^2_yy g(x, y)`` and
    ``b = grad_y f(x, y)``.  Pass ``b`` and/or ``Av`` when the caller already
    holds them to avoid paying for the oracle calls twice.
    """
    P.check_dims(x, y, v)
    if b is None:
        b = P.grad_f_y(x, y)
    if Av is None:
        Av = P.hvp_gyy(x, y, v)
    grad = P.grad_f_x(x, y) - P.jvp_gxy(x, y, v)
    return HyperGradEstimate(grad=grad, residual_norm=float(np.linalg.norm(Av - b)))


def lower_gd_step(P: BilevelProblem, x, y, theta: float) -> np.ndarray:
    if theta <= 0:
        raise ValueError("theta must be positive")
    return y - theta * P.grad_g_y(x, y)


def dense_hessian_yy(P: BilevelProblem, x, y) -> np.ndarray:
    """Materialize ``grad^2_yy g`` column by column (test oracle only)."""
    eye = np.eye(P.dy)
    H = np.column_stack([P.hvp_gyy(x, y, eye[:, i]) for i in range(P.dy)])
    return 0.5 * (H + H.T)


def solve_lower_level(P: BilevelProblem, x, y0=None, tol: float = 1e-10,
                      max_iter: int = 200) -> np.ndarray:
    """Damped Newton on ``g(x, .)`` with dense Hessians (test oracle only)."""
    y = np.zeros(P.dy) if y0 is None else np.array(y0, dtype=float)
    for _ in range(max_iter):
        grad = P.grad_g_y(x, y)
        if np.linalg.norm(grad) <= tol:
            return y
        step = dense_solve(dense_hessian_yy(P, x, y), grad)
        g0 = P.g_value(x, y)
        slope = float(grad @ step)
        gnorm = np.linalg.norm(grad)
        t = 1.0
        # near the minimizer g differences drown in roundoff; a shrinking
        # gradient is then the better acceptance test
        while t > 1e-12 and (P.g_value(x, y - t * step) > g0 - 1e-4 * t * slope
                             and np.linalg.norm(P.grad_g_y(x, y - t * step)) >= gnorm):
            t *= 0.5
        y = y - t * step
    if np.linalg.norm(P.grad_g_y(x, y)) <= tol:
        return y
    raise NoConvergence(
        f"lower level not solved to {tol:g} in {max_iter} Newton steps "
        f"(||grad_y g|| = {np.linalg.norm(P.grad_g_y(x, y)):.3e})"
    )


def exact_hypergrad(P: BilevelProblem, x, inner_tol: float = 1e-10, y0=None) -> np.ndarray:
    """Implicit-function-theorem hyper-gradient with a dense Hessian solve.

    Quarantined as a test oracle: it solves the lower level to ``inner_tol``
    and factors the full ``dy x dy`` Hessian.
    """
    P.check_dims(x=x)
    y = solve_lower_level(P, x, y0=y0, tol=inner_tol)
    v = dense_solve(dense_hessian_yy(P, x, y), P.grad_f_y(x, y))
    return P.grad_f_x(x, y) - P.jvp_gxy(x, y, v)
