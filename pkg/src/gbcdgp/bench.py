"""Multi-solver comparison on one train/test split."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .baselines import solve
from .errors import GBCDError
from .kernels import KernelSpec
from .predict import GPModel, normalized_rmse, predict_mean
from .problem import Problem

logger = logging.getLogger(__name__)

BENCH_COLUMNS = (
    "solver", "status", "converged", "outer_iters", "kernel_evals",
    "train_seconds", "final_grad_inf_norm", "rmse",
)


@dataclass
class BenchRow:
    solver: str
    status: str
    converged: bool
    outer_iters: int
    kernel_evals: int
    train_seconds: float
    final_grad_inf_norm: float
    rmse: float
    report: object = None
    alpha: np.ndarray | None = None

    def as_tuple(self, timing=False):
        return (self.solver, self.status, self.converged, self.outer_iters, self.kernel_evals,
                self.train_seconds if timing else float("nan"), self.final_grad_inf_norm, self.rmse)


def run_bench(train, test, kernel_spec: KernelSpec, solvers, cache_columns=0):
    """Fit every ``(name, config)`` in ``solvers`` on ``train`` and score on ``test``.

    Each solver gets a fresh kernel operator so evaluation counts are not
    shared.  A failing solver yields a row with ``status="error"`` and the
    remaining solvers still run.
    """
    rows = []
    var_y = float(np.var(train.y))
    for name, config in solvers:
        problem = Problem(train.X, train.y, kernel_spec, cache_columns)
        t0 = time.perf_counter()
        try:
            alpha, rep = solve(problem, name, config)
        except GBCDError as exc:
            logger.error("%s failed: %s", name, exc)
            rep = getattr(exc, "report", None)
            rows.append(BenchRow(name, "error", False, rep.outer_iters if rep else 0,
                                 problem.ops.evals, time.perf_counter() - t0, float("nan"),
                                 float("nan"), rep))
            continue
        elapsed = time.perf_counter() - t0
        rmse = float("nan")
        if test is not None and test.n > 0:
            model = GPModel(problem, alpha, name, config.tol, rep, elapsed)
            rmse = normalized_rmse(predict_mean(model, test.X), test.y, var_y)
        status = "converged" if rep.converged else "not_converged"
        rows.append(BenchRow(name, status, rep.converged, rep.outer_iters, rep.kernel_evals,
                             elapsed, rep.final_grad_inf_norm, rmse, rep, alpha))
        logger.info("%s: %s after %d iterations, %d kernel evals, rmse %.6g",
                    name, status, rep.outer_iters, rep.kernel_evals, rmse)
    return rows
