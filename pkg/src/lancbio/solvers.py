"""Outer-loop bilevel solvers sharing one run contract.

Every solver keeps an estimate ``v`` of ``A^{-1} b`` with
``A = grad^2_yy g(x, y)`` and ``b = grad_y f(x, y)``, steps ``x`` along
``grad_x f - grad^2_xy g v`` and takes one gradient step on the lower level.
They differ only in how ``v`` is refreshed each iteration:

=================  ======================================================
``lancbio``        dynamic Lanczos on the residual system, restarted every
                   epoch, Galerkin (tridiagonal) correction
``lancbio_minres`` same, minimal-residual correction (indefinite Hessians)
``subbio``         exact minimizer over span{b, (I - eta A) v_prev}
``amigo_gd``       ``inner_iters`` gradient steps, warm started
``amigo_cg``       ``inner_iters`` CG steps, warm started
``soba``           one gradient step on the quadratic
``stocbio``        truncated Neumann series, rebuilt every iteration
``ttsa``           Neumann series with decaying two-timescale steps
=================  ======================================================

Trace diagnostics (residual norm, upper value, ...) are computed on the
uncounted problem so ``RunResult.counters`` reflect only what the algorithm
itself spends.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .core import BilevelProblem, CountingOracles, EvalCounters, hypergrad_estimate, lower_gd_step
from .errors import Diverged, DimensionMismatch, LuckyBreakdown, NearSingular, RankDeficient, UnknownSolver
from .krylov import LanczosState, cg_solve, dlanczos_step, minres_correction, tridiag_correction

SUBSPACE_DEGENERACY = 1e-10


@dataclass
class SolverConfig:
    """Step sizes, budgets and schedules shared by all solvers.

    ``m`` is the Lanczos epoch length, ``m0`` the number of leading steps
    per epoch during which ``x`` is frozen.  With ``ramp`` the epoch length
    grows ``1, 2, ..., m`` over the first ``m`` epochs.  ``decay`` applies
    ``lam_k = lam / k**decay`` to every solver except TTSA, which uses its own
    ``ttsa_lam_exp``/``ttsa_theta_exp`` schedule.
    """

    lam: float = 1.0
    theta: float = 0.1
    eta: float = 0.1
    m: int = 10
    m0: int = 0
    K: int = 100
    inner_iters: int = 5
    neumann_terms: int = 5
    ramp: bool = True
    decay: float = 0.0
    ttsa_lam_exp: float = 0.6
    ttsa_theta_exp: float = 0.4
    seed: int = 0
    time_budget_s: float | None = None

    def __post_init__(self):
        for name in ("theta", "eta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.lam >= 0:
            raise ValueError("lam must be nonnegative")
        for name in ("m", "K", "inner_iters", "neumann_terms"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not 0 <= self.m0 < self.m:
            raise ValueError("m0 must satisfy 0 <= m0 < m")
        if self.decay < 0:
            raise ValueError("decay must be nonnegative")

    def epoch_length(self, epoch: int) -> int:
        return min(epoch + 1, self.m) if self.ramp else self.m

    def outer_step(self, k: int) -> float:
        return self.lam / k**self.decay if self.decay else self.lam


TRACE_COLUMNS = (
    "iter", "wall_time_s", "hypergrad_norm", "residual_norm", "upper_value",
    "lower_grad_norm", "test_metric", "n_hvp", "n_jvp", "n_grad",
)


@dataclass
class TraceRecord:
    iter: int
    wall_time_s: float
    hypergrad_norm: float
    residual_norm: float
    upper_value: float
    lower_grad_norm: float
    test_metric: float | None
    n_hvp: int
    n_jvp: int
    n_grad: int
    event: str = ""

    def row(self) -> list:
        return [getattr(self, name) for name in TRACE_COLUMNS]


@dataclass
class RunResult:
    x_final: np.ndarray
    y_final: np.ndarray
    v_final: np.ndarray
    trace: list
    counters: EvalCounters
    info: dict = field(default_factory=dict)


class _VUpdate:
    """Strategy refreshing ``v``; returns ``(v, freeze_x, event)``."""

    freeze_x = False

    def __init__(self, P: BilevelProblem, cfg: SolverConfig, v0):
        self.P = P
        self.cfg = cfg
        self.v = v0

    def step_sizes(self, k: int) -> tuple[float, float]:
        return self.cfg.outer_step(k), self.cfg.theta

    def __call__(self, x, y, b, k):
        raise NotImplementedError


class _Lanczos(_VUpdate):
    def __init__(self, P, cfg, v0, minres=False):
        super().__init__(P, cfg, v0)
        self.minres = minres
        self.epoch = -1
        self.epoch_len = 0
        self.steps = 0
        self.state = None
        self.v_bar = v0
        self.w = None
        self.dv = np.zeros_like(v0)
        self.restart_due = True
        self.n_restarts = 0

    def _correction(self, r):
        if self.minres:
            return minres_correction(self.state, float(np.linalg.norm(r)))
        return tridiag_correction(self.state, r)

    def __call__(self, x, y, b, k):
        apply_A = lambda q: self.P.hvp_gyy(x, y, q)  # noqa: E731
        event = ""
        if self.restart_due:
            self.epoch += 1
            self.n_restarts += 1
            self.epoch_len = self.cfg.epoch_length(self.epoch)
            self.steps = 0
            self.restart_due = False
            self.v_bar = self.v
            self.w = apply_A(self.v_bar)
            self.dv = np.zeros_like(self.v)
            r0 = b - self.w
            event = "restart"
            r0_norm = np.linalg.norm(r0)
            if not np.isfinite(r0_norm):
                raise Diverged(f"residual norm overflowed at iteration {k}; reduce lam or theta")
            if not r0_norm > 0.0:
                self.state = None
                self.restart_due = True
                self.v = self.v_bar
                return self.v, self.cfg.m0 > 0, "restart;zero-residual"
            self.state = LanczosState.start(r0)

        try:
            self.state = dlanczos_step(self.state, apply_A)
        except LuckyBreakdown as exc:
            # the completed factorization spans an invariant subspace: still usable
            self.state = exc.state
            self.restart_due = True
            event = ";".join(filter(None, (event, "lucky-breakdown")))
        self.steps += 1

        r = b - self.w
        try:
            self.dv = self._correction(r)
        except (NearSingular, RankDeficient) as exc:
            self.restart_due = True
            event = ";".join(filter(None, (event, type(exc).__name__)))
        self.v = self.v_bar + self.dv
        if self.steps >= self.epoch_len:
            self.restart_due = True
        return self.v, self.steps <= self.cfg.m0, event


class _SubBiO(_VUpdate):
    def __init__(self, P, cfg, v0):
        super().__init__(P, cfg, v0)
        self.objectives = []

    def __call__(self, x, y, b, k):
        apply_A = lambda q: self.P.hvp_gyy(x, y, q)  # noqa: E731
        eta = self.cfg.eta
        s2 = self.v - eta * apply_A(self.v)
        As2 = apply_A(s2)
        Ab = apply_A(b)
        nb = float(np.linalg.norm(b))
        event = ""
        if nb == 0.0:
            v, Av = np.zeros_like(b), np.zeros_like(b)
            event = "zero-rhs"
        else:
            u1, Au1 = b / nb, Ab / nb
            proj = float(u1 @ s2)
            t = s2 - proj * u1
            nt = float(np.linalg.norm(t))
            if nt < SUBSPACE_DEGENERACY * nb:
                z = nb / float(u1 @ Au1)
                v, Av = z * u1, z * Au1
                event = "degenerate-subspace"
            else:
                u2, Au2 = t / nt, (As2 - proj * Au1) / nt
                off = 0.5 * (float(u1 @ Au2) + float(u2 @ Au1))
                H = np.array([[float(u1 @ Au1), off], [off, float(u2 @ Au2)]])
                z = np.linalg.solve(H, np.array([nb, float(u2 @ b)]))
                v, Av = z[0] * u1 + z[1] * u2, z[0] * Au1 + z[1] * Au2
        soba = s2 + eta * b
        A_soba = As2 + eta * Ab
        self.objectives.append(
            (0.5 * float(v @ Av) - float(b @ v), 0.5 * float(soba @ A_soba) - float(b @ soba))
        )
        self.v = v
        return v, False, event


class _AmigoGD(_VUpdate):
    def __call__(self, x, y, b, k):
        v = self.v
        for _ in range(self.cfg.inner_iters):
            v = v - self.cfg.eta * (self.P.hvp_gyy(x, y, v) - b)
        self.v = v
        return v, False, ""


class _AmigoCG(_VUpdate):
    def __call__(self, x, y, b, k):
        self.v = cg_solve(lambda q: self.P.hvp_gyy(x, y, q), b, self.v, self.cfg.inner_iters)
        return self.v, False, ""


class _Soba(_VUpdate):
    def __call__(self, x, y, b, k):
        self.v = self.v - self.cfg.eta * (self.P.hvp_gyy(x, y, self.v) - b)
        return self.v, False, ""


def neumann_estimate(apply_A, b, eta: float, terms: int) -> np.ndarray:
    """``eta * sum_{i < terms} (I - eta A)^i b`` using ``terms - 1`` products."""
    p = np.array(b, dtype=float, copy=True)
    acc = p.copy()
    for _ in range(terms - 1):
        p = p - eta * apply_A(p)
        acc += p
    return eta * acc


class _StocBiO(_VUpdate):
    def __call__(self, x, y, b, k):
        self.v = neumann_estimate(
            lambda q: self.P.hvp_gyy(x, y, q), b, self.cfg.eta, self.cfg.neumann_terms
        )
        return self.v, False, ""


class _TTSA(_StocBiO):
    def step_sizes(self, k):
        cfg = self.cfg
        return cfg.lam / k**cfg.ttsa_lam_exp, cfg.theta / k**cfg.ttsa_theta_exp


_UPDATES = {
    "lancbio": lambda P, cfg, v0: _Lanczos(P, cfg, v0),
    "lancbio_minres": lambda P, cfg, v0: _Lanczos(P, cfg, v0, minres=True),
    "subbio": _SubBiO,
    "amigo_gd": _AmigoGD,
    "amigo_cg": _AmigoCG,
    "soba": _Soba,
    "stocbio": _StocBiO,
    "ttsa": _TTSA,
}
SOLVERS = tuple(_UPDATES)
BASELINES = ("amigo_gd", "amigo_cg", "soba", "stocbio", "ttsa")


def _finite(x):
    return None if x is None else float(x)


def run_solver(name: str, P: BilevelProblem, cfg: SolverConfig, x0=None, y0=None, v0=None,
               callback=None, keep_iterates: bool = False) -> RunResult:
    """Run solver ``name`` for ``cfg.K`` outer iterations (or the time budget).

    ``callback(record)`` is invoked after every iteration, which lets callers
    stream traces to disk.  With ``keep_iterates`` the ``(x_k, y_k, v_k)``
    triples each trace row was measured at land in ``info["iterates"]``.
    """
    if name not in _UPDATES:
        raise UnknownSolver(f"unknown solver {name!r}; known: {', '.join(SOLVERS)}")
    rng = np.random.default_rng(cfg.seed)
    x_init, y_init = P.initial_point(rng)
    x = np.array(x_init if x0 is None else x0, dtype=float)
    y = np.array(y_init if y0 is None else y0, dtype=float)
    v = np.zeros(P.dy) if v0 is None else np.array(v0, dtype=float)
    if x.shape != (P.dx,) or y.shape != (P.dy,) or v.shape != (P.dy,):
        raise DimensionMismatch(
            f"initial point shapes {x.shape}, {y.shape}, {v.shape} do not match "
            f"dx={P.dx}, dy={P.dy}"
        )

    counters = EvalCounters()
    counted = CountingOracles(P, counters)
    update = _UPDATES[name](counted, cfg, v)
    trace, iterates = [], []
    elapsed = 0.0

    for k in range(1, cfg.K + 1):
        t0 = time.perf_counter()
        b = counted.grad_f_y(x, y)
        if not all(np.isfinite(a).all() for a in (b, x, y, v)):
            raise Diverged(f"{name}: non-finite iterate at iteration {k}; reduce lam or theta")
        v, freeze_x, event = update(x, y, b, k)
        # the residual's HVP is a diagnostic and goes to the raw problem
        est = hypergrad_estimate(counted, x, y, v, b=b, Av=P.hvp_gyy(x, y, v))
        lam_k, theta_k = update.step_sizes(k)
        x_next = x if freeze_x else x - lam_k * est.grad
        y_next = lower_gd_step(counted, x_next, y, theta_k)
        elapsed += time.perf_counter() - t0

        record = TraceRecord(
            iter=k,
            wall_time_s=elapsed,
            hypergrad_norm=float(np.linalg.norm(est.grad)),
            residual_norm=est.residual_norm,
            upper_value=float(P.f_value(x, y)),
            lower_grad_norm=float(np.linalg.norm(P.grad_g_y(x, y))),
            test_metric=_finite(P.test_metric(x, y)),
            n_hvp=counters.n_hvp,
            n_jvp=counters.n_jvp,
            n_grad=counters.n_grad,
            event=event,
        )
        trace.append(record)
        if keep_iterates:
            iterates.append((x.copy(), y.copy(), v.copy()))
        if callback is not None:
            callback(record)
        x, y = x_next, y_next
        if cfg.time_budget_s is not None and elapsed >= cfg.time_budget_s:
            break

    info = {"solver": name}
    if keep_iterates:
        info["iterates"] = iterates
    if isinstance(update, _Lanczos):
        info["restarts"] = update.n_restarts
    if isinstance(update, _SubBiO):
        info["subproblem_objectives"] = update.objectives
    return RunResult(x, y, v, trace, counters, info)


def lancbio_run(P, cfg, x0=None, y0=None, v0=None, **kw) -> RunResult:
    return run_solver("lancbio", P, cfg, x0, y0, v0, **kw)


def lancbio_minres_run(P, cfg, x0=None, y0=None, v0=None, **kw) -> RunResult:
    return run_solver("lancbio_minres", P, cfg, x0, y0, v0, **kw)


def subbio_run(P, cfg, x0=None, y0=None, v0=None, **kw) -> RunResult:
    return run_solver("subbio", P, cfg, x0, y0, v0, **kw)


def baseline_run(kind: str, P, cfg, x0=None, y0=None, v0=None, **kw) -> RunResult:
    if kind not in BASELINES:
        raise UnknownSolver(f"unknown baseline {kind!r}; known: {', '.join(BASELINES)}")
    return run_solver(kind, P, cfg, x0, y0, v0, **kw)


def config_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(SolverConfig))


def lancbio_hvp_budget(K: int, m: int) -> int:
    """HVPs spent by a breakdown-free, unramped LancBiO run."""
    return K + math.ceil(K / m)
