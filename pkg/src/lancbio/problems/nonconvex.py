"""Bilevel problem whose lower level is a separable sine (indefinite Hessian).

    f(x, y) = (x - a)^2 + ||y - a - c||^2
    g(x, y) = sum_i sin(x + y_i - c_i)

``x`` is a scalar (``dx = 1``) and ``y`` has ``d`` entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import BilevelProblem


@dataclass(frozen=True, eq=False)
class NonconvexSinSpec:
    d: int = 100
    a: float = 1.0
    c: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be at least 1")
        c = np.zeros(self.d) if self.c is None else np.asarray(self.c, dtype=float)
        if c.shape != (self.d,):
            raise ValueError(f"c must have shape ({self.d},)")
        object.__setattr__(self, "c", c)


class NonconvexSinProblem(BilevelProblem):
    def __init__(self, spec: NonconvexSinSpec):
        self.spec = spec
        self.a = float(spec.a)
        self.c = spec.c
        self.dx, self.dy = 1, spec.d

    def _phase(self, x, y):
        return x[0] + y - self.c

    def f_value(self, x, y):
        r = y - self.a - self.c
        return float((x[0] - self.a) ** 2 + r @ r)

    def g_value(self, x, y):
        return float(np.sum(np.sin(self._phase(x, y))))

    def grad_f_x(self, x, y):
        return np.array([2.0 * (x[0] - self.a)])

    def grad_f_y(self, x, y):
        return 2.0 * (y - self.a - self.c)

    def grad_g_y(self, x, y):
        return np.cos(self._phase(x, y))

    def hvp_gyy(self, x, y, v):
        return -np.sin(self._phase(x, y)) * v

    def jvp_gxy(self, x, y, v):
        return np.array([-np.sin(self._phase(x, y)) @ v])

    def initial_point(self, rng):
        return np.zeros(1), rng.uniform(-np.pi, np.pi, self.dy)


def make_nonconvex_sin(spec: NonconvexSinSpec) -> NonconvexSinProblem:
    return NonconvexSinProblem(spec)
