"""Lanczos machinery for matrix-free symmetric operators.

An operator is any callable mapping a vector ``w`` to ``A w``.  Nothing here
forms ``A``; the dense checks live in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LuckyBreakdown
from .kernels import SymTridiagonal, solve_sym_tridiag, tridiag_least_squares

BREAKDOWN_GUARD = 1e-12


@dataclass(frozen=True, eq=False)
class LanczosState:
    """Incremental Lanczos factorization driven one operator product at a time.

    After ``dim`` steps ``basis`` holds ``q_1 .. q_dim``, ``T`` is the
    ``dim x dim`` tridiagonal projection, ``beta_next`` is the norm of the
    last unnormalized residual and ``q_next`` the pending vector ``q_{dim+1}``
    (``None`` once the recurrence broke down).
    """

    basis: tuple = ()
    T: SymTridiagonal = field(default_factory=SymTridiagonal)
    beta_next: float = 0.0
    q_next: np.ndarray | None = None

    @classmethod
    def start(cls, b) -> "LanczosState":
        b = np.asarray(b, dtype=float)
        nrm = np.linalg.norm(b)
        if nrm == 0.0 or not np.isfinite(nrm):
            raise ValueError("Lanczos start vector must be nonzero and finite")
        return cls(q_next=b / nrm)

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def exhausted(self) -> bool:
        return self.q_next is None

    def basis_matrix(self) -> np.ndarray:
        return np.column_stack(self.basis)


def dlanczos_step(state: LanczosState, apply_A) -> LanczosState:
    """Advance the factorization by one step using one product with ``apply_A``.

    The operator may differ between calls; the recurrence only ever looks at
    the two newest basis vectors, so local orthogonality of ``q_j`` and
    ``q_{j+1}`` holds whatever the drift.

    Raises
    ------
    LuckyBreakdown
        When ``||omega_j|| <= 1e-12 ||u_j||``.  The exception's ``state``
        carries the extended ``T`` and basis with ``q_next=None``.
    """
    if state.q_next is None:
        raise ValueError("Lanczos state has no pending vector; restart it")
    q = state.q_next
    u = np.asarray(apply_A(q), dtype=float)
    if state.dim:
        u = u - state.beta_next * state.basis[-1]
    alpha = float(q @ u)
    omega = u - alpha * q
    beta = float(np.linalg.norm(omega))

    T = state.T.extend(alpha, state.beta_next)
    basis = state.basis + (q,)
    if beta <= BREAKDOWN_GUARD * np.linalg.norm(u):
        done = LanczosState(basis=basis, T=T, beta_next=0.0, q_next=None)
        raise LuckyBreakdown(f"invariant Krylov subspace at step {done.dim}", done)
    return LanczosState(basis=basis, T=T, beta_next=beta, q_next=omega / beta)


@dataclass(frozen=True, eq=False)
class LanczosFactorization:
    T: SymTridiagonal
    Q: np.ndarray
    beta: float
    q_next: np.ndarray | None
    breakdown: bool = False


def classic_lanczos(apply_A, b, m: int) -> LanczosFactorization:
    """Run ``m`` steps of the static Lanczos process started at ``b``.

    Satisfies ``A Q = Q T + beta q_next e_m^T``.  On a lucky breakdown the
    factorization is truncated at the breakdown step and ``breakdown`` is set.
    """
    b = np.asarray(b, dtype=float)
    if m < 1:
        raise ValueError("m must be at least 1")
    nb = np.linalg.norm(b)
    if nb == 0.0:
        raise ValueError("b must be nonzero")
    n = b.size
    # basis stored row-wise so every operator sees a contiguous vector
    Q = np.zeros((m + 1, n))
    alphas = np.zeros(m)
    betas = np.zeros(m + 1)
    Q[0] = b / nb
    q_prev = np.zeros(n)
    for j in range(m):
        u = np.asarray(apply_A(Q[j]), dtype=float) - betas[j] * q_prev
        alphas[j] = Q[j] @ u
        w = u - alphas[j] * Q[j]
        betas[j + 1] = np.linalg.norm(w)
        if betas[j + 1] <= BREAKDOWN_GUARD * np.linalg.norm(u):
            T = SymTridiagonal(alphas[: j + 1], betas[1 : j + 1])
            return LanczosFactorization(T, Q[: j + 1].T.copy(), 0.0, None, True)
        Q[j + 1] = w / betas[j + 1]
        q_prev = Q[j]
    T = SymTridiagonal(alphas, betas[1:m])
    return LanczosFactorization(T, Q[:m].T.copy(), float(betas[m]), Q[m].copy())


def cg_solve(apply_A, b, v0, iters: int) -> np.ndarray:
    """Plain conjugate gradients from the warm start ``v0``.

    Costs ``iters + 1`` operator products (one for the initial residual);
    stops early only when the residual is exactly zero.
    """
    v = np.array(v0, dtype=float, copy=True)
    r = np.asarray(b, dtype=float) - apply_A(v)
    p = r.copy()
    rr = float(r @ r)
    for _ in range(iters):
        if rr == 0.0:
            break
        Ap = apply_A(p)
        pAp = float(p @ Ap)
        if pAp == 0.0:
            break
        step = rr / pAp
        v += step * p
        r -= step * Ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return v


def tridiag_correction(state: LanczosState, r) -> np.ndarray:
    """Galerkin correction ``Q T^{-1} Q^T r`` on the current basis."""
    Q = state.basis_matrix()
    z = solve_sym_tridiag(state.T, Q.T @ r)
    return Q @ z


def minres_correction(state: LanczosState, r_norm: float) -> np.ndarray:
    """Minimal-residual correction ``Q c`` with ``c`` from the bordered least squares."""
    c = tridiag_least_squares(state.T, state.beta_next, r_norm)
    return state.basis_matrix() @ c
