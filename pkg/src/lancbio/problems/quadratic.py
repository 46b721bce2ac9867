"""Quadratic bilevel problem with a closed-form hyper-gradient.

    g(x, y) = 1/2 y^T A y - y^T B x
    f(x, y) = 1/2 y^T H y + c^T y + 1/2 x^T P x + e^T x

so ``y*(x) = A^{-1} B x`` and ``grad^2_xy g = -B^T``.  With ``H = 0`` the
right-hand side ``grad_y f = c`` does not depend on ``y``, which gives a
frozen linear system for testing the Krylov solvers inside the outer loop.
"""

from __future__ import annotations

import numpy as np

from ..core import BilevelProblem


def random_spd(n: int, cond: float, rng: np.random.Generator) -> np.ndarray:
    """SPD matrix with eigenvalues log-spaced on ``[1, cond]``."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.logspace(0.0, np.log10(cond), n) if n > 1 else np.ones(1)
    A = (Q * eig) @ Q.T
    return 0.5 * (A + A.T)


class QuadraticBilevel(BilevelProblem):
    def __init__(self, A, B, H, c, P, e):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.H = np.asarray(H, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.P = np.asarray(P, dtype=float)
        self.e = np.asarray(e, dtype=float)
        self.dy, self.dx = self.B.shape

    def f_value(self, x, y):
        return float(0.5 * y @ self.H @ y + self.c @ y + 0.5 * x @ self.P @ x + self.e @ x)

    def g_value(self, x, y):
        return float(0.5 * y @ self.A @ y - y @ self.B @ x)

    def grad_f_x(self, x, y):
        return self.P @ x + self.e

    def grad_f_y(self, x, y):
        return self.H @ y + self.c

    def grad_g_y(self, x, y):
        return self.A @ y - self.B @ x

    def hvp_gyy(self, x, y, v):
        return self.A @ v

    def jvp_gxy(self, x, y, v):
        return -self.B.T @ v

    def solution_y(self, x):
        return np.linalg.solve(self.A, self.B @ x)

    def hypergrad(self, x):
        """Closed-form ``grad phi(x)``."""
        y = self.solution_y(x)
        v = np.linalg.solve(self.A, self.H @ y + self.c)
        return self.P @ x + self.e + self.B.T @ v


def make_quadratic(dx: int = 5, dy: int = 10, cond: float = 100.0, frozen: bool = False,
                   seed: int = 0) -> QuadraticBilevel:
    """Random well-posed quadratic instance; ``frozen`` sets ``H = 0``."""
    rng = np.random.default_rng(seed)
    A = random_spd(dy, cond, rng)
    B = rng.standard_normal((dy, dx)) / np.sqrt(dx)
    if frozen:
        H = np.zeros((dy, dy))
    else:
        L = rng.standard_normal((dy, dy)) / np.sqrt(dy)
        H = L @ L.T
    c = rng.standard_normal(dy)
    P = np.eye(dx)
    e = rng.standard_normal(dx)
    return QuadraticBilevel(A, B, H, c, P, e)
