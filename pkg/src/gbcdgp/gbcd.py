"""Greedy block coordinate descent for ``(K + sigma_sq I) alpha = y``.

Each outer iteration builds an active set ``B`` of ``m`` variables one at a
time.  A candidate ``i`` is scored by the decrease obtained when only
``alpha_i`` moves, with the step already chosen for ``B`` held fixed::

    e_i  = Kbar[i, B] @ dalpha_B + g_i
    gain = e_i**2 / (k(x_i, x_i) + sigma_sq)

The first variable of every block is picked by scanning all ``n`` indices;
afterwards only a fresh random subset of ``kappa`` free indices is scored.
The inverse of ``Kbar[B, B]`` and the exact block step ``-R g_B`` are grown
with O(t^2) bordered updates, so when the block is complete the step is the
exact minimizer over ``B``.  The ``m`` columns fetched while growing the block
are then reused to update the full gradient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ContractViolation, NumericalBreakdown, NumericalFailure
from .problem import SolverState, Tracker, default_max_outer

logger = logging.getLogger(__name__)

FACTORIZATIONS = ("rank_one_inverse", "cholesky_update")
BREAKDOWN_RTOL = 1e-12


@dataclass
class SolveConfig:
    m: int = 500
    kappa: int = 60
    tol: float = 1e-4
    max_outer_iters: int | None = None
    rng_seed: int = 0
    subproblem_factorization: str = "rank_one_inverse"

    def validate(self, n):
        if self.kappa < 1:
            raise ContractViolation("kappa must be >= 1")
        if self.m < 1:
            raise ContractViolation("block size m must be >= 1")
        if not self.tol > 0:
            raise ContractViolation("tol must be > 0")
        if self.max_outer_iters is not None and self.max_outer_iters < 0:
            raise ContractViolation("max_outer_iters must be >= 0")
        if self.subproblem_factorization not in FACTORIZATIONS:
            raise ContractViolation(f"unknown factorization {self.subproblem_factorization!r}")

    def block_size(self, n):
        return min(self.m, n)

    def outer_cap(self, n):
        if self.max_outer_iters is not None:
            return self.max_outer_iters
        return default_max_outer(n, self.block_size(n))


@dataclass
class ActiveSetWorkspace:
    """Result of one greedy block construction.

    ``R`` is the inverse of ``Kbar[B, B]`` (``None`` when the Cholesky variant
    is used; see :meth:`inverse`), ``columns`` holds ``Kbar[:, B]``.
    """

    B: list
    delta_alpha: np.ndarray
    columns: np.ndarray
    m: int
    kappa: int
    R: np.ndarray | None = None
    chol: np.ndarray | None = None
    candidates: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))
    candidate_gains: dict = field(default_factory=dict)
    fallbacks: int = 0

    def block_matrix(self):
        return self.columns[np.asarray(self.B, dtype=np.intp), :]

    def inverse(self):
        if self.R is not None:
            return self.R
        t = len(self.B)
        return scipy.linalg.cho_solve((self.chol[:t, :t], True), np.eye(t))


def rank_one_inverse_update(R, k_col, K_ss):
    """Inverse of ``[[A, k], [k^T, K_ss]]`` given ``R = A^{-1}``.

    With ``beta = R k`` and ``eta = 1 / (K_ss - k^T beta)`` the result is
    ``[[R, 0], [0, 0]] + eta [beta; -1][beta; -1]^T``.
    """
    R = np.asarray(R, dtype=np.float64)
    k_col = np.asarray(k_col, dtype=np.float64).reshape(-1)
    t = k_col.size
    R = R.reshape(t, t)
    beta = R @ k_col
    eta = _schur_inverse(K_ss, k_col @ beta)
    out = np.empty((t + 1, t + 1))
    out[:t, :t] = R + eta * np.outer(beta, beta)
    out[:t, t] = -eta * beta
    out[t, :t] = -eta * beta
    out[t, t] = eta
    return out


def delta_alpha_update(delta_alpha, beta, eta, g_B, g_s):
    """Grow the exact block step ``-R g_B`` by one coordinate.

    ``delta_alpha`` must equal ``-R g_B`` for the current block; the result
    equals ``-R_new [g_B; g_s]``.
    """
    delta_alpha = np.asarray(delta_alpha, dtype=np.float64).reshape(-1)
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    c = eta * (beta @ np.asarray(g_B, dtype=np.float64).reshape(-1) - g_s)
    out = np.empty(delta_alpha.size + 1)
    out[:-1] = delta_alpha - c * beta
    out[-1] = c
    return out


def _schur_inverse(K_ss, quad):
    schur = K_ss - quad
    if not schur > BREAKDOWN_RTOL * K_ss:
        raise NumericalBreakdown(f"Schur complement {schur:.3e} too small (K_ss={K_ss:.3e})", schur)
    return 1.0 / schur


class _IndexPool:
    """Free indices with O(1) removal and partial Fisher-Yates subset draws."""

    def __init__(self, n):
        self.items = np.arange(n, dtype=np.intp)
        self.pos = np.arange(n, dtype=np.intp)
        self.size = n

    def remove(self, i):
        p = self.pos[i]
        last = self.items[self.size - 1]
        self.items[p] = last
        self.pos[last] = p
        self.items[self.size - 1] = i
        self.pos[i] = self.size - 1
        self.size -= 1

    def draw(self, k, rng):
        if k >= self.size:
            return self.items[: self.size].copy()
        items, pos = self.items, self.pos
        picks = rng.integers(np.arange(k), self.size)
        for i, j in enumerate(picks.tolist()):
            if i != j:
                a, b = items[i], items[j]
                items[i], items[j] = b, a
                pos[a], pos[b] = j, i
        return items[:k].copy()


def _argmax_lowest(cands, gains):
    best = gains.max()
    return int(cands[gains == best].min())


def greedy_select_block(problem, state, config, rng, diag=None):
    """Build one active set and its exact block step (a single outer iteration's selection)."""
    ops = problem.ops
    n = problem.n
    m = config.block_size(n)
    g = state.grad
    if diag is None:
        diag = ops.diagonal()
    use_chol = config.subproblem_factorization == "cholesky_update"

    C = np.empty((n, m))
    M = np.zeros((m, m))  # inverse (rank-one variant) or lower Cholesky factor
    delta = np.zeros(0)
    B = []
    fallbacks = 0
    pool = _IndexPool(n)

    cands = np.arange(n, dtype=np.intp)
    e = g.copy()
    gains = e * e / diag
    s = _argmax_lowest(cands, gains)
    last_cands, last_gains = cands, gains

    for t in range(m):
        col = ops.column(s)
        C[:, t] = col
        K_ss = col[s]
        if t == 0:
            if use_chol:
                M[0, 0] = np.sqrt(K_ss)
            else:
                M[0, 0] = 1.0 / K_ss
            delta = np.array([-g[s] / K_ss])
        else:
            Bi = np.asarray(B, dtype=np.intp)
            k_col = col[Bi]
            g_B = g[Bi]
            try:
                if use_chol:
                    delta = _chol_grow(M, t, k_col, K_ss, g_B, g[s])
                else:
                    delta = _inverse_grow(M, t, k_col, K_ss, delta, g_B, g[s])
            except NumericalBreakdown as exc:
                logger.warning("rank-one update broke down at t=%d (%s); refactorizing block", t, exc)
                fallbacks += 1
                delta = _dense_block(C, B + [s], t + 1, g, M, use_chol)
        B.append(s)
        pool.remove(s)
        if t + 1 == m:
            break
        cands = pool.draw(config.kappa, rng)
        e = C[cands, : t + 1] @ delta + g[cands]
        gains = e * e / diag[cands]
        s = _argmax_lowest(cands, gains)
        last_cands, last_gains = cands, gains

    # O never overlaps B once a selection is made
    keep = ~np.isin(last_cands, B)
    last_cands, last_gains = last_cands[keep], last_gains[keep]
    ws = ActiveSetWorkspace(
        B=B,
        delta_alpha=delta,
        columns=C,
        m=m,
        kappa=config.kappa,
        candidates=last_cands,
        fallbacks=fallbacks,
    )
    if len(last_cands) <= config.kappa:
        ws.candidate_gains = dict(zip(last_cands.tolist(), last_gains.tolist()))
    if use_chol:
        ws.chol = M
    else:
        ws.R = M
    return ws


def _inverse_grow(R, t, k_col, K_ss, delta, g_B, g_s):
    Rt = R[:t, :t]
    beta = Rt @ k_col
    eta = _schur_inverse(K_ss, k_col @ beta)
    Rt += eta * np.outer(beta, beta)
    R[:t, t] = -eta * beta
    R[t, :t] = -eta * beta
    R[t, t] = eta
    return delta_alpha_update(delta, beta, eta, g_B, g_s)


def _chol_grow(L, t, k_col, K_ss, g_B, g_s):
    l = scipy.linalg.solve_triangular(L[:t, :t], k_col, lower=True, check_finite=False)
    d2 = K_ss - l @ l
    if not d2 > BREAKDOWN_RTOL * K_ss:
        raise NumericalBreakdown(f"Cholesky pivot {d2:.3e} too small", d2)
    L[t, :t] = l
    L[t, t] = np.sqrt(d2)
    rhs = np.append(g_B, g_s)
    return -scipy.linalg.cho_solve((L[: t + 1, : t + 1], True), rhs, check_finite=False)


def _dense_block(C, B, size, g, M, use_chol):
    Bi = np.asarray(B, dtype=np.intp)
    K_BB = C[Bi, :size]
    try:
        L = np.linalg.cholesky(K_BB)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"block of size {size} is not numerically positive definite") from exc
    if use_chol:
        M[:size, :size] = L
    else:
        M[:size, :size] = scipy.linalg.cho_solve((L, True), np.eye(size))
    return -scipy.linalg.cho_solve((L, True), g[Bi])


def gbcd_solve(problem, config=None, callback=None):
    """Solve ``Kbar alpha = rhs`` by greedy block coordinate descent.

    Returns ``(alpha, report)``.  Running out of outer iterations is not an
    error: the report then has ``converged=False``.  ``callback``, if given,
    is called after every outer iteration with ``(state, workspace)``.
    """
    config = config or SolveConfig()
    n = problem.n
    config.validate(n)
    cap = config.outer_cap(n)
    y = problem.rhs
    sigma_sq = problem.spec.sigma_sq
    rhs_scale = 1.0 + np.max(np.abs(y))

    tr = Tracker(problem, "gbcd", config.tol)
    rep = tr.report
    rng = np.random.default_rng(config.rng_seed)
    state = SolverState.initial(problem)
    gnorm = float(np.max(np.abs(state.grad)))
    tr.record(0, state.objective, gnorm)
    diag = None

    while gnorm > config.tol and state.outer_iter < cap:
        if diag is None:
            diag = problem.ops.diagonal()
        try:
            ws = greedy_select_block(problem, state, config, rng, diag)
        except NumericalFailure as exc:
            tr.finish(False, state.outer_iter, gnorm, str(exc))
            exc.report = rep
            raise
        rep.fallbacks += ws.fallbacks
        Bi = np.asarray(ws.B, dtype=np.intp)
        delta = ws.delta_alpha
        g_B = state.grad[Bi]
        df = 0.5 * delta @ (ws.block_matrix() @ delta) + g_B @ delta

        state.alpha[Bi] += delta
        state.grad += ws.columns @ delta
        state.objective += df
        state.outer_iter += 1

        rep.block_grad_max = max(rep.block_grad_max, float(np.max(np.abs(state.grad[Bi]))) / rhs_scale)
        if df > -0.5 * sigma_sq * (delta @ delta) + 1e-10:
            rep.decrease_violations += 1
        gnorm = float(np.max(np.abs(state.grad)))
        tr.record(state.outer_iter, state.objective, gnorm)
        if callback is not None:
            callback(state, ws)

    converged = gnorm <= config.tol
    msg = "converged" if converged else f"stopped after {state.outer_iter} outer iterations"
    tr.finish(converged, state.outer_iter, gnorm, msg)
    return state.alpha, rep
