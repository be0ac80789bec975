"""Problem definition, solver state and the report/trace shared by every solver."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ContractViolation
from .kernels import KernelOperator, KernelSpec

TRACE_COLUMNS = ("iteration", "objective", "grad_inf_norm", "seconds", "kernel_evals")


class Problem:
    """The system ``(K + sigma_sq I) alpha = rhs`` with ``K`` served on demand.

    ``rhs`` is the target vector ``y`` when fitting a model, or a cross
    covariance vector ``k_*`` when computing a predictive variance.
    Problems built with :meth:`with_rhs` share one :class:`KernelOperator`,
    so its column cache and evaluation counter are shared as well.
    """

    def __init__(self, X, rhs, spec: KernelSpec, cache_columns=0, ops=None):
        self.ops = ops if ops is not None else KernelOperator(X, spec, cache_columns)
        rhs = np.array(rhs, dtype=np.float64).reshape(-1)
        if rhs.size != self.ops.n:
            raise ContractViolation(f"rhs has length {rhs.size}, expected {self.ops.n}")
        if not np.all(np.isfinite(rhs)):
            raise ContractViolation("rhs contains non-finite values")
        self.rhs = rhs

    @property
    def X(self):
        return self.ops.X

    @property
    def spec(self):
        return self.ops.spec

    @property
    def n(self):
        return self.ops.n

    def with_rhs(self, rhs):
        return Problem(None, rhs, self.spec, ops=self.ops)


@dataclass
class SolverState:
    """Current iterate, its gradient ``Kbar alpha - rhs`` and objective."""

    alpha: np.ndarray
    grad: np.ndarray
    outer_iter: int = 0
    objective: float = 0.0

    @classmethod
    def initial(cls, problem):
        n = problem.n
        return cls(alpha=np.zeros(n), grad=-problem.rhs.copy(), outer_iter=0, objective=0.0)


class TraceRow(NamedTuple):
    iteration: int
    objective: float
    grad_inf_norm: float
    seconds: float
    kernel_evals: int


@dataclass
class SolveReport:
    solver: str
    converged: bool = False
    outer_iters: int = 0
    final_grad_inf_norm: float = float("nan")
    objective_trace: list = field(default_factory=list)
    decrease_bound_factor: float = float("nan")
    wall_time: float = 0.0
    kernel_evals: int = 0
    tol: float = float("nan")
    block_grad_max: float = 0.0
    decrease_violations: int = 0
    fallbacks: int = 0
    message: str = ""

    def trace_array(self):
        return np.array([tuple(r) for r in self.objective_trace], dtype=float).reshape(-1, 5)


class Tracker:
    """Bookkeeping helper: timing, evaluation deltas and trace rows for one solve."""

    def __init__(self, problem, solver, tol):
        self.ops = problem.ops
        self.evals0 = self.ops.evals
        self.t0 = time.perf_counter()
        self.report = SolveReport(solver=solver, tol=tol, decrease_bound_factor=problem.spec.sigma_sq)

    def evals(self):
        return self.ops.evals - self.evals0

    def record(self, iteration, objective, grad_inf_norm):
        self.report.objective_trace.append(
            TraceRow(int(iteration), float(objective), float(grad_inf_norm),
                     time.perf_counter() - self.t0, self.evals())
        )

    def finish(self, converged, iters, grad_inf_norm, message=""):
        r = self.report
        r.converged = bool(converged)
        r.outer_iters = int(iters)
        r.final_grad_inf_norm = float(grad_inf_norm)
        r.wall_time = time.perf_counter() - self.t0
        r.kernel_evals = self.evals()
        r.message = message
        return r


def objective_value(problem, alpha, chunk=256):
    """``0.5 alpha^T Kbar alpha - rhs^T alpha`` using streamed kernel columns."""
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if alpha.size != problem.n:
        raise ContractViolation(f"alpha has length {alpha.size}, expected {problem.n}")
    if not np.any(alpha):
        return 0.0
    Ka = problem.ops.matvec(alpha, chunk=chunk)
    return float(0.5 * alpha @ Ka - problem.rhs @ alpha)


def default_max_outer(n, m):
    return 100 * -(-n // m)
