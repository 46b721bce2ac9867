"""Small dense and tridiagonal linear-algebra kernels.

Everything here is a pure function of its inputs.  The solvers only ever
touch :func:`solve_sym_tridiag` and :func:`tridiag_least_squares`; the dense
routines and the finite-difference helpers exist for test oracles and for
the oracle-checking command of the CLI.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NearSingular, NotPositiveDefinite, RankDeficient

PIVOT_GUARD = 1e-12
RANK_GUARD = 1e-12
DEFAULT_FD_STEP = 1e-5


@dataclass(frozen=True, eq=False)
class SymTridiagonal:
    """Symmetric tridiagonal matrix stored as its diagonal and one off-diagonal.

    ``offdiag[i]`` couples rows ``i`` and ``i + 1``.
    """

    diag: np.ndarray = field(default_factory=lambda: np.zeros(0))
    offdiag: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=float).reshape(-1)
        offdiag = np.asarray(self.offdiag, dtype=float).reshape(-1)
        if offdiag.size != max(diag.size - 1, 0):
            raise ValueError(
                f"offdiag must have length {max(diag.size - 1, 0)}, got {offdiag.size}"
            )
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "offdiag", offdiag)

    @property
    def size(self) -> int:
        return self.diag.size

    def extend(self, alpha: float, beta: float) -> "SymTridiagonal":
        """Border with one row/column: ``beta`` off the diagonal, ``alpha`` on it.

        On an empty matrix ``beta`` has nowhere to go and is dropped.
        """
        diag = np.append(self.diag, alpha)
        offdiag = np.append(self.offdiag, beta) if self.size else self.offdiag
        return SymTridiagonal(diag, offdiag)

    def matvec(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        out = self.diag * z
        out[:-1] += self.offdiag * z[1:]
        out[1:] += self.offdiag * z[:-1]
        return out

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def bordered(self, beta_next: float) -> np.ndarray:
        """Dense ``(j+1) x j`` matrix ``[T; beta_next * e_j^T]``."""
        j = self.size
        out = np.zeros((j + 1, j))
        out[:j] = self.to_dense()
        if j:
            out[j, j - 1] = beta_next
        return out

    def inf_norm(self) -> float:
        if not self.size:
            return 0.0
        rows = np.abs(self.diag).copy()
        rows[:-1] += np.abs(self.offdiag)
        rows[1:] += np.abs(self.offdiag)
        return float(rows.max())


def solve_sym_tridiag(T: SymTridiagonal, rhs) -> np.ndarray:
    """Solve ``T z = rhs`` with an unpivoted LDL^T factorization.

    Raises
    ------
    NearSingular
        If a pivot ``|d_i|`` drops below ``1e-12 * ||T||_inf``.
    """
    rhs = np.asarray(rhs, dtype=float).reshape(-1)
    n = T.size
    if n == 0:
        raise ValueError("cannot solve with an empty tridiagonal matrix")
    if rhs.size != n:
        raise ValueError(f"rhs has length {rhs.size}, expected {n}")

    guard = PIVOT_GUARD * T.inf_norm()
    a, b = T.diag, T.offdiag
    d = np.empty(n)
    l = np.empty(max(n - 1, 0))
    y = np.empty(n)

    d[0] = a[0]
    if abs(d[0]) <= guard or d[0] == 0.0:
        raise NearSingular(f"pivot 0 is {d[0]:.3e} (guard {guard:.3e})")
    y[0] = rhs[0]
    for i in range(1, n):
        l[i - 1] = b[i - 1] / d[i - 1]
        d[i] = a[i] - l[i - 1] * b[i - 1]
        if abs(d[i]) <= guard or d[i] == 0.0:
            raise NearSingular(f"pivot {i} is {d[i]:.3e} (guard {guard:.3e})")
        y[i] = rhs[i] - l[i - 1] * y[i - 1]

    z = np.empty(n)
    z[-1] = y[-1] / d[-1]
    for i in range(n - 2, -1, -1):
        z[i] = y[i] / d[i] - l[i] * z[i + 1]
    return z


def tridiag_least_squares(T: SymTridiagonal, beta_next: float, rhs_norm: float) -> np.ndarray:
    """Minimize ``|| rhs_norm * e_1 - [T; beta_next e_j^T] c ||`` over ``c``.

    The bordered band is reduced to upper-triangular form with plane
    rotations, one per column, then back-substituted.

    Raises
    ------
    RankDeficient
        If the smallest singular value of the bordered matrix is below
        ``1e-12`` times the largest.
    """
    j = T.size
    if j == 0:
        raise ValueError("cannot solve with an empty tridiagonal matrix")
    if rhs_norm < 0:
        raise ValueError("rhs_norm must be nonnegative")

    H = T.bordered(beta_next)
    sv = np.linalg.svd(H, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] < RANK_GUARD * sv[0]:
        raise RankDeficient(f"singular values span [{sv[-1]:.3e}, {sv[0]:.3e}]")

    R = H
    g = np.zeros(j + 1)
    g[0] = rhs_norm
    for i in range(j):
        a, b = R[i, i], R[i + 1, i]
        r = np.hypot(a, b)
        if r == 0.0:
            continue
        c, s = a / r, b / r
        hi = min(i + 3, j)
        top = R[i, i:hi].copy()
        bot = R[i + 1, i:hi].copy()
        R[i, i:hi] = c * top + s * bot
        R[i + 1, i:hi] = -s * top + c * bot
        g[i], g[i + 1] = c * g[i] + s * g[i + 1], -s * g[i] + c * g[i + 1]

    out = np.zeros(j)
    for i in range(j - 1, -1, -1):
        acc = g[i]
        if i + 1 < j:
            acc -= R[i, i + 1] * out[i + 1]
        if i + 2 < j:
            acc -= R[i, i + 2] * out[i + 2]
        out[i] = acc / R[i, i]
    return out


def dense_solve(A, b) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A`` via Cholesky."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    return scipy.linalg.cho_solve(factor, b)


def finite_diff_gradient(fn, x, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar field ``fn`` at ``x``."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    e = np.zeros_like(x)
    for i in range(x.size):
        e.flat[i] = h
        grad.flat[i] = (fn(x + e) - fn(x - e)) / (2.0 * h)
        e.flat[i] = 0.0
    return grad


def finite_diff_directional(fn, x, direction, h: float = DEFAULT_FD_STEP):
    """Central difference of a (vector-valued) ``fn`` along ``direction``."""
    x = np.asarray(x, dtype=float)
    direction = np.asarray(direction, dtype=float)
    return (np.asarray(fn(x + h * direction)) - np.asarray(fn(x - h * direction))) / (2.0 * h)


def relative_error(approx, reference, floor: float = 1e-12) -> float:
    """Norm-wise relative error ``||approx - reference|| / max(||reference||, floor)``."""
    approx = np.asarray(approx, dtype=float)
    reference = np.asarray(reference, dtype=float)
    return float(np.linalg.norm(approx - reference) / max(np.linalg.norm(reference), floor))
