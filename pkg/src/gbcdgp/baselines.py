"""Reference solvers for the same regularized kernel system.

* ``direct`` -- dense Cholesky of the materialized ``Kbar`` (size-capped).
* ``cg`` -- conjugate gradient, ``Kbar @ p`` streamed column block by block.
* ``bcdc`` -- block coordinate descent over consecutive, wrapping index blocks.
* ``bcdg`` -- block coordinate descent on the ``m`` largest ``|g_i|``.
* ``smo`` -- two-coordinate descent on the two largest ``|g_i|``.

Every iterative solver stops when ``max|Kbar alpha - rhs| <= tol``, counts
kernel evaluations through the problem's operator, and returns
``(alpha, SolveReport)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ContractViolation, NumericalFailure, RefusalError
from .problem import SolverState, Tracker, default_max_outer

METHODS = ("direct", "cg", "bcdc", "bcdg", "smo")
DIRECT_CAP = 20_000


@dataclass
class BaselineConfig:
    method: str = "cg"
    tol: float = 1e-4
    max_iters: int | None = None
    m: int = 500
    rng_seed: int = 0
    direct_cap: int = DIRECT_CAP
    # SMO takes ~n pair steps per sweep; record one trace row every `trace_stride` steps
    trace_stride: int | None = None

    def validate(self):
        if self.method not in METHODS:
            raise ContractViolation(f"unknown method {self.method!r}")
        if not self.tol > 0:
            raise ContractViolation("tol must be > 0")
        if self.m < 1:
            raise ContractViolation("block size m must be >= 1")
        if self.max_iters is not None and self.max_iters < 0:
            raise ContractViolation("max_iters must be >= 0")


def direct_solve(problem, cap=DIRECT_CAP):
    """Solve by Cholesky factorization of the full ``Kbar``."""
    if problem.n > cap:
        raise RefusalError(f"direct solve refused: n={problem.n} exceeds the cap of {cap}")
    K = problem.ops.dense()
    try:
        factor = scipy.linalg.cho_factor(K, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("Cholesky factorization of Kbar failed") from exc
    return scipy.linalg.cho_solve(factor, problem.rhs, check_finite=False)


def run_direct(problem, config=None):
    """:func:`direct_solve` wrapped to produce a one-row report like the iterative solvers."""
    config = config or BaselineConfig(method="direct")
    tr = Tracker(problem, "direct", config.tol)
    K = problem.ops.dense() if problem.n <= config.direct_cap else None
    if K is None:
        raise RefusalError(f"direct solve refused: n={problem.n} exceeds the cap of {config.direct_cap}")
    try:
        factor = scipy.linalg.cho_factor(K, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("Cholesky factorization of Kbar failed", tr.finish(False, 0, np.nan)) from exc
    alpha = scipy.linalg.cho_solve(factor, problem.rhs, check_finite=False)
    g = K @ alpha - problem.rhs
    gnorm = float(np.max(np.abs(g)))
    tr.record(1, 0.5 * alpha @ (g - problem.rhs), gnorm)
    tr.finish(True, 1, gnorm, "direct factorization")
    return alpha, tr.report


def cg_solve(problem, config=None):
    """Plain conjugate gradient from ``alpha = 0``; one streamed ``Kbar`` product per iteration."""
    config = config or BaselineConfig(method="cg")
    config.validate()
    n = problem.n
    cap = config.max_iters if config.max_iters is not None else max(2 * n, 100)
    y = problem.rhs
    tr = Tracker(problem, "cg", config.tol)

    alpha = np.zeros(n)
    r = y.copy()
    p = r.copy()
    rr = r @ r
    gnorm = float(np.max(np.abs(r)))
    tr.record(0, 0.0, gnorm)
    k = 0
    while gnorm > config.tol and k < cap:
        Ap = problem.ops.matvec(p)
        pAp = p @ Ap
        if not pAp > 0:
            tr.finish(False, k, gnorm, "non-positive curvature")
            raise NumericalFailure(f"CG met p^T Kbar p = {pAp:.3e}", tr.report)
        step = rr / pAp
        alpha += step * p
        r -= step * Ap
        rr_new = r @ r
        p *= rr_new / rr
        p += r
        rr = rr_new
        k += 1
        gnorm = float(np.max(np.abs(r)))
        tr.record(k, -0.5 * alpha @ (r + y), gnorm)
    converged = gnorm <= config.tol
    tr.finish(converged, k, gnorm, "converged" if converged else f"stopped after {k} iterations")
    return alpha, tr.report


def _block_descent(problem, config, name, choose, callback=None):
    """Shared outer loop: pick a block, solve it exactly, update alpha and g."""
    config.validate()
    n = problem.n
    m = min(config.m, n)
    cap = config.max_iters if config.max_iters is not None else default_max_outer(n, m)
    y = problem.rhs
    sigma_sq = problem.spec.sigma_sq
    rhs_scale = 1.0 + np.max(np.abs(y))
    tr = Tracker(problem, name, config.tol)
    rep = tr.report
    state = SolverState.initial(problem)
    gnorm = float(np.max(np.abs(state.grad)))
    tr.record(0, 0.0, gnorm)
    C = np.empty((n, m))

    while gnorm > config.tol and state.outer_iter < cap:
        B = choose(state, m)
        problem.ops.columns(B, out=C)
        K_BB = C[B, :]
        g_B = state.grad[B]
        try:
            factor = scipy.linalg.cho_factor(K_BB, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            tr.finish(False, state.outer_iter, gnorm, "block factorization failed")
            raise NumericalFailure("block Kbar_BB is not positive definite", rep) from exc
        delta = -scipy.linalg.cho_solve(factor, g_B, check_finite=False)
        df = 0.5 * delta @ (K_BB @ delta) + g_B @ delta

        state.alpha[B] += delta
        state.grad += C @ delta
        state.objective += df
        state.outer_iter += 1

        rep.block_grad_max = max(rep.block_grad_max, float(np.max(np.abs(state.grad[B]))) / rhs_scale)
        if df > -0.5 * sigma_sq * (delta @ delta) + 1e-10:
            rep.decrease_violations += 1
        gnorm = float(np.max(np.abs(state.grad)))
        tr.record(state.outer_iter, state.objective, gnorm)
        if callback is not None:
            callback(state, B, delta)

    converged = gnorm <= config.tol
    tr.finish(converged, state.outer_iter, gnorm,
              "converged" if converged else f"stopped after {state.outer_iter} outer iterations")
    return state.alpha, rep


def cyclic_block(n, m, k):
    """Indices of the k-th cyclic block: ``k*m, k*m+1, ...`` modulo n."""
    start = (k * m) % n
    return (start + np.arange(m)) % n


def top_gradient_block(grad, m):
    """The ``m`` indices of largest ``|g_i|``, ties resolved toward the lowest index."""
    return np.sort(np.argsort(-np.abs(grad), kind="stable")[:m])


def bcdc_solve(problem, config=None, callback=None):
    config = config or BaselineConfig(method="bcdc")
    n = problem.n

    def choose(state, m):
        return cyclic_block(n, m, state.outer_iter)

    return _block_descent(problem, config, "bcdc", choose, callback)


def bcdg_solve(problem, config=None, callback=None):
    config = config or BaselineConfig(method="bcdg")

    def choose(state, m):
        return top_gradient_block(state.grad, m)

    return _block_descent(problem, config, "bcdg", choose, callback)


def _top_two(grad):
    a = np.abs(grad)
    i = int(np.argmax(a))
    ai = a[i]
    a[i] = -1.0
    j = int(np.argmax(a))
    a[i] = ai
    return (i, j) if i < j else (j, i)


def smo_solve(problem, config=None):
    """Two-variable descent: the pair with the largest ``|g|`` is solved analytically."""
    config = config or BaselineConfig(method="smo")
    config.validate()
    n = problem.n
    if n < 2:
        raise ContractViolation("SMO needs at least two variables")
    cap = config.max_iters if config.max_iters is not None else 2000 * n
    stride = config.trace_stride or max(1, n // 2)
    ops = problem.ops
    tr = Tracker(problem, "smo", config.tol)
    state = SolverState.initial(problem)
    alpha, g = state.alpha, state.grad
    f = 0.0
    gnorm = float(np.max(np.abs(g)))
    tr.record(0, f, gnorm)
    k = 0
    while gnorm > config.tol and k < cap:
        i, j = _top_two(g)
        ci = ops.column(i)
        cj = ops.column(j)
        a, b, c = ci[i], ci[j], cj[j]
        gi, gj = g[i], g[j]
        det = a * c - b * b
        if not det > 0:
            tr.finish(False, k, gnorm, "singular pair")
            raise NumericalFailure(f"pair ({i}, {j}) has non-positive determinant {det:.3e}", tr.report)
        di = -(c * gi - b * gj) / det
        dj = -(a * gj - b * gi) / det
        f += 0.5 * (a * di * di + 2.0 * b * di * dj + c * dj * dj) + gi * di + gj * dj
        alpha[i] += di
        alpha[j] += dj
        g += di * ci
        g += dj * cj
        k += 1
        gnorm = float(np.max(np.abs(g)))
        if k % stride == 0:
            tr.record(k, f, gnorm)
    if not tr.report.objective_trace or tr.report.objective_trace[-1].iteration != k:
        tr.record(k, f, gnorm)
    converged = gnorm <= config.tol
    tr.finish(converged, k, gnorm, "converged" if converged else f"stopped after {k} iterations")
    return alpha, tr.report


def solve(problem, method, config=None):
    """Dispatch to one of :data:`METHODS` (or ``"gbcd"``)."""
    if method == "gbcd":
        from .gbcd import gbcd_solve

        return gbcd_solve(problem, config)
    if config is None:
        config = BaselineConfig(method=method)
    runners = {"direct": run_direct, "cg": cg_solve, "bcdc": bcdc_solve, "bcdg": bcdg_solve, "smo": smo_solve}
    if method not in runners:
        raise ContractViolation(f"unknown solver {method!r}")
    return runners[method](problem, config)
