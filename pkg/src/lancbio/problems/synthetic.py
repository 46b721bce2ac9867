"""Synthetic bilevel problem with trigonometric and log-sum-exp terms.

    f(x, y) = c1 cos(x^T D1 y) + 1/2 ||D2 x - y||^2
    g(x, y) = c2 sum_i sin(x_i + y_i) + log sum_i exp(x_i y_i) + 1/2 y^T (D3 + G) y

``D1, D2, D3`` are diagonal (stored as vectors) and ``G`` is a dense SPD
matrix, which keeps the lower level strongly convex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from ..core import BilevelProblem


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    d: int
    c1: float
    c2: float
    D1: np.ndarray
    D2: np.ndarray
    D3: np.ndarray
    G: np.ndarray
    seed: int = 0

    @classmethod
    def random(cls, d: int = 100, seed: int = 0, c1: float = 0.1, c2: float = 0.5,
               g_min: float = 1.0, g_max: float = 1e5) -> "SyntheticSpec":
        """Draw an instance: ``G`` has ``d`` evenly spaced eigenvalues on
        ``[g_min, g_max]`` in a random orthonormal basis, ``D1 ~ U[-5, 5]``,
        ``D2 ~ U[0.1, 1.1]``, ``D3 ~ U[0, 0.5]``."""
        rng = np.random.default_rng(seed)
        Q, R = np.linalg.qr(rng.standard_normal((d, d)))
        Q = Q * np.sign(np.diag(R))
        eig = np.linspace(g_min, g_max, d) if d > 1 else np.array([g_min])
        G = (Q * eig) @ Q.T
        G = 0.5 * (G + G.T)
        return cls(
            d=d,
            c1=c1,
            c2=c2,
            D1=rng.uniform(-5.0, 5.0, d),
            D2=rng.uniform(0.1, 1.1, d),
            D3=rng.uniform(0.0, 0.5, d),
            G=G,
            seed=seed,
        )


class SyntheticProblem(BilevelProblem):
    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        self.dx = self.dy = spec.d
        self.c1, self.c2 = spec.c1, spec.c2
        self.d1, self.d2, self.d3 = spec.D1, spec.D2, spec.D3
        self.G = spec.G

    def _M(self, v):
        return self.d3 * v + self.G @ v

    def f_value(self, x, y):
        r = self.d2 * x - y
        return float(self.c1 * np.cos(x @ (self.d1 * y)) + 0.5 * r @ r)

    def g_value(self, x, y):
        return float(
            self.c2 * np.sum(np.sin(x + y)) + logsumexp(x * y) + 0.5 * y @ self._M(y)
        )

    def grad_f_x(self, x, y):
        s = x @ (self.d1 * y)
        return -self.c1 * np.sin(s) * self.d1 * y + self.d2 * (self.d2 * x - y)

    def grad_f_y(self, x, y):
        s = x @ (self.d1 * y)
        return -self.c1 * np.sin(s) * self.d1 * x - (self.d2 * x - y)

    def grad_g_y(self, x, y):
        p = softmax(x * y)
        return self.c2 * np.cos(x + y) + x * p + self._M(y)

    def hvp_gyy(self, x, y, v):
        p = softmax(x * y)
        xp = x * p
        return (
            -self.c2 * np.sin(x + y) * v
            + x * xp * v
            - xp * (xp @ v)
            + self._M(v)
        )

    def jvp_gxy(self, x, y, v):
        # d/dx_j of (x_i p_i) = delta_ij p_i (1 + x_i y_i) - x_i p_i p_j y_j
        p = softmax(x * y)
        return (
            v * (-self.c2 * np.sin(x + y) + p * (1.0 + x * y))
            - p * y * ((x * p) @ v)
        )

    def initial_point(self, rng):
        return rng.standard_normal(self.dx), np.zeros(self.dy)


def make_synthetic(spec: SyntheticSpec) -> SyntheticProblem:
    return SyntheticProblem(spec)
