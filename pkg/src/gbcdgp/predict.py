"""GP predictive mean and variance on top of any of the solvers, plus error metrics.

Predictive equations for a test input ``x*`` with ``k*_i = k(x*, x_i)``::

    mean(x*)     = k*^T (K + sigma_sq I)^{-1} y
    variance(x*) = k(x*, x*) + sigma_sq - k*^T (K + sigma_sq I)^{-1} k*

The mean needs one training solve; the variance needs one solve per test point.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .baselines import BaselineConfig, solve
from .errors import ContractViolation, GBCDError, NonConvergence, RefusalError
from .gbcd import SolveConfig
from .kernels import as_input_matrix

logger = logging.getLogger(__name__)

CLAMP_TOL = 1e-8


@dataclass
class GPModel:
    problem: object
    alpha: np.ndarray
    solver_tag: str
    tol: float
    report: object = None
    fit_time: float = 0.0


@dataclass
class PredictionResult:
    mean: np.ndarray | None = None
    variance: np.ndarray | None = None
    per_point_solve_reports: list = field(default_factory=list)
    clamped: int = 0
    invalid: int = 0
    mean_time: float = 0.0
    variance_time: float = 0.0

    def inner_iterations(self):
        return [r.outer_iters if r is not None else -1 for r in self.per_point_solve_reports]


def make_config(solver, tol=1e-4, m=500, kappa=60, max_iters=None, rng_seed=0,
                factorization="rank_one_inverse"):
    """Build the right config object for ``solver`` from flat options."""
    if solver == "gbcd":
        return SolveConfig(m=m, kappa=kappa, tol=tol, max_outer_iters=max_iters, rng_seed=rng_seed,
                           subproblem_factorization=factorization)
    return BaselineConfig(method=solver, tol=tol, max_iters=max_iters, m=m, rng_seed=rng_seed)


def fit(problem, solver="gbcd", config=None):
    """Solve ``Kbar alpha = y`` and wrap the result as a :class:`GPModel`.

    A solver that stops short of its tolerance raises :class:`NonConvergence`
    carrying the report; no model is returned in that case.
    """
    config = config or make_config(solver)
    t0 = time.perf_counter()
    alpha, report = solve(problem, solver, config)
    elapsed = time.perf_counter() - t0
    if not report.converged:
        raise NonConvergence(f"{solver} did not reach tol={config.tol}: {report.message}", report)
    return GPModel(problem, alpha, solver, config.tol, report, elapsed)


def _check_test_inputs(model, Xstar):
    Xstar = as_input_matrix(Xstar)
    if Xstar.shape[1] != model.problem.ops.d:
        raise ContractViolation(
            f"test inputs have {Xstar.shape[1]} attributes, model was trained on {model.problem.ops.d}"
        )
    return Xstar


def predict_mean(model, Xstar, chunk=1024):
    Xstar = _check_test_inputs(model, Xstar)
    ops = model.problem.ops
    out = np.empty(Xstar.shape[0])
    for start in range(0, Xstar.shape[0], chunk):
        stop = min(start + chunk, Xstar.shape[0])
        out[start:stop] = ops.cross(Xstar[start:stop]) @ model.alpha
    return out


def _prior_variance(ops, Xstar):
    # k(x*, x*) is exactly 1 for the squared exponential kernel
    ops.counter.add(Xstar.shape[0])
    return np.exp(-np.zeros(Xstar.shape[0])) + ops.spec.sigma_sq


def predict_variance(model, Xstar, solver="gbcd", config=None):
    """Predictive variances, one cold-started solve ``Kbar z = k*`` per test point.

    Returns a :class:`PredictionResult` with ``variance`` filled in.  A point
    whose solve fails or does not converge gets ``nan`` and counts as invalid.
    """
    Xstar = _check_test_inputs(model, Xstar)
    config = config or make_config(solver)
    problem = model.problem
    ops = problem.ops
    t0 = time.perf_counter()
    prior = _prior_variance(ops, Xstar)
    Kx = ops.cross(Xstar)
    var = np.empty(Xstar.shape[0])
    reports = []
    if solver == "direct":
        if problem.n > config.direct_cap:
            raise RefusalError(f"direct solve refused: n={problem.n} exceeds the cap of {config.direct_cap}")
        factor = scipy.linalg.cho_factor(ops.dense(), lower=True, check_finite=False)
        Z = scipy.linalg.cho_solve(factor, Kx.T, check_finite=False)
        var[:] = prior - np.einsum("ij,ji->i", Kx, Z)
        reports = [None] * Xstar.shape[0]
    else:
        for j in range(Xstar.shape[0]):
            sub = problem.with_rhs(Kx[j])
            try:
                z, rep = solve(sub, solver, config)
            except GBCDError as exc:
                logger.warning("variance solve for test point %d failed: %s", j, exc)
                var[j] = np.nan
                reports.append(getattr(exc, "report", None))
                continue
            reports.append(rep)
            var[j] = prior[j] - Kx[j] @ z if rep.converged else np.nan
    res = PredictionResult(variance=var, per_point_solve_reports=reports)
    low = var < 0
    near = low & (var >= -CLAMP_TOL)
    if np.any(near):
        logger.warning("clamping %d slightly negative variances to 0", int(near.sum()))
        var[near] = 0.0
    far = low & ~near
    var[far] = np.nan
    res.clamped = int(near.sum())
    res.invalid = int(np.isnan(var).sum())
    res.variance_time = time.perf_counter() - t0
    return res


def predict(model, Xstar, variance=False, solver=None, config=None):
    """Mean (and optionally variance) with separate timings for each part."""
    t0 = time.perf_counter()
    mean = predict_mean(model, Xstar)
    mean_time = time.perf_counter() - t0
    if variance:
        res = predict_variance(model, Xstar, solver or model.solver_tag, config)
    else:
        res = PredictionResult()
    res.mean = mean
    res.mean_time = mean_time
    return res


def normalized_rmse(predictions, targets, train_target_variance):
    """Test RMSE divided by the training-target standard deviation."""
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.size != y.size:
        raise ContractViolation(f"length mismatch: {p.size} predictions vs {y.size} targets")
    if not train_target_variance > 0:
        raise RefusalError("training target variance must be positive")
    return float(np.sqrt(np.mean((y - p) ** 2 / train_target_variance)))


def relative_variance_rmse(v_ref, v_test):
    """RMS of ``(v_ref - v_test) / v_ref``."""
    r = np.asarray(v_ref, dtype=np.float64).reshape(-1)
    v = np.asarray(v_test, dtype=np.float64).reshape(-1)
    if r.size != v.size:
        raise ContractViolation(f"length mismatch: {r.size} vs {v.size}")
    if np.any(r == 0):
        raise RefusalError("reference variances must be nonzero")
    return float(np.sqrt(np.mean(((r - v) / r) ** 2)))
