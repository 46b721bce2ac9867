"""Finite-difference verification of problem oracles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BilevelProblem
from .kernels import finite_diff_directional, finite_diff_gradient, relative_error

GRAD_TOL = 1e-5
HVP_TOL = 1e-4
JVP_TOL = 1e-4
REL_FLOOR = 1e-8

# desk-sized instances used by `lancbio check-oracles` and the test suite
CHECK_INSTANCES = {
    "quadratic": {"dx": 5, "dy": 10},
    "synthetic": {"d": 20},
    "hyperclean": {"n_train": 40, "n_val": 30, "n_test": 0, "dim": 5, "classes": 3},
    "logreg": {"n_train": 200, "n_val": 100, "n_test": 0, "dim": 20, "classes": 3},
    "nonconvex_sin": {"d": 100},
}


@dataclass
class CheckResult:
    oracle: str
    max_rel_error: float
    tol: float
    n_points: int

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.oracle:<9} max rel err {self.max_rel_error:.2e} "
                f"(tol {self.tol:.0e}, {self.n_points} points)")


def random_point(P: BilevelProblem, rng: np.random.Generator):
    x = rng.standard_normal(P.dx)
    y = rng.standard_normal(P.dy)
    v = rng.standard_normal(P.dy)
    return x, y, v


def check_oracles(P: BilevelProblem, n_points: int = 100, seed: int = 0,
                  h: float = 1e-5) -> list[CheckResult]:
    """Compare every derivative oracle with central differences.

    Gradients are checked against differences of the value oracles, the HVP
    against differences of ``grad_g_y`` along ``v``, and the cross JVP
    against the ``x``-gradient of ``v^T grad_g_y``.
    """
    rng = np.random.default_rng(seed)
    worst = dict.fromkeys(("grad_f_x", "grad_f_y", "grad_g_y", "hvp_gyy", "jvp_gxy"), 0.0)
    for _ in range(n_points):
        x, y, v = random_point(P, rng)
        pairs = {
            "grad_f_x": (P.grad_f_x(x, y), finite_diff_gradient(lambda s: P.f_value(s, y), x, h)),
            "grad_f_y": (P.grad_f_y(x, y), finite_diff_gradient(lambda s: P.f_value(x, s), y, h)),
            "grad_g_y": (P.grad_g_y(x, y), finite_diff_gradient(lambda s: P.g_value(x, s), y, h)),
            "hvp_gyy": (
                P.hvp_gyy(x, y, v),
                finite_diff_directional(lambda s: P.grad_g_y(x, s), y, v, h),
            ),
            "jvp_gxy": (
                P.jvp_gxy(x, y, v),
                finite_diff_gradient(lambda s: v @ P.grad_g_y(s, y), x, h),
            ),
        }
        for name, (analytic, numeric) in pairs.items():
            worst[name] = max(worst[name], relative_error(analytic, numeric, REL_FLOOR))
    tols = {"grad_f_x": GRAD_TOL, "grad_f_y": GRAD_TOL, "grad_g_y": GRAD_TOL,
            "hvp_gyy": HVP_TOL, "jvp_gxy": JVP_TOL}
    return [CheckResult(name, worst[name], tols[name], n_points) for name in worst]
