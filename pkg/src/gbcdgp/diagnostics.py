"""Gradient-correlation diagnostic for neighbouring inputs.

Pick random probe inputs, find each probe's nearest neighbours (Euclidean
distance in input space), run GBCD for a fixed window of outer iterations
while recording the gradient entries of probes and neighbours, and histogram
the Pearson correlation between each probe's gradient trace and each of its
neighbours' traces.  Running it once with ``rhs = y`` and once with
``rhs = k*`` shows how strongly neighbouring gradients move together in the
two kinds of system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .gbcd import SolveConfig, gbcd_solve
from .problem import Problem


@dataclass
class CorrelationDiagnosticSpec:
    probe_count: int = 100
    neighbor_count: int = 50
    window: int = 50
    bin_edges: np.ndarray = field(default_factory=lambda: np.linspace(-1.0, 1.0, 11))

    def validate(self, n):
        if self.probe_count < 1 or self.probe_count > n:
            raise ContractViolation(f"probe_count must be in [1, {n}]")
        if not (1 <= self.neighbor_count < n):
            raise ContractViolation(f"neighbor_count must be in [1, {n - 1}]")
        if self.window < 2:
            raise ContractViolation("window must be >= 2")
        edges = np.asarray(self.bin_edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ContractViolation("bin edges must be strictly increasing")
        if edges[0] > -1.0 or edges[-1] < 1.0:
            raise ContractViolation("bin edges must cover [-1, 1]")


@dataclass
class CorrelationHistogram:
    system: str
    edges: np.ndarray
    counts: np.ndarray
    coefficients: np.ndarray
    skipped: int

    @property
    def pairs(self):
        return int(self.coefficients.size)

    @property
    def median(self):
        return float(np.median(self.coefficients)) if self.coefficients.size else float("nan")

    def median_bin(self):
        """Index of the bin holding the median of the binned mass."""
        if self.pairs == 0:
            return -1
        cum = np.cumsum(self.counts)
        return int(np.searchsorted(cum, self.pairs / 2.0))


def correlation(a, b):
    """Pearson coefficient ``cov(a, b) / (std(a) std(b))``; ``None`` if either trace is constant.

    Written so that ``correlation(a, a) == 1.0`` and ``correlation(a, -a) == -1.0`` exactly.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    da = a - a.mean()
    db = b - b.mean()
    ma = np.max(np.abs(da))
    mb = np.max(np.abs(db))
    if ma == 0.0 or mb == 0.0:
        return None
    # rescale so tiny gradients cannot underflow the sums of squares
    da /= ma
    db /= mb
    saa = da @ da
    sbb = db @ db
    c = (da @ db) / np.sqrt(saa * sbb)
    return float(min(1.0, max(-1.0, c)))


def nearest_neighbors(X, i, k):
    """Indices of the ``k`` inputs closest to ``X[i]`` (excluding ``i``), ties by index."""
    d2 = np.sum((X - X[i]) ** 2, axis=1)
    d2[i] = np.inf
    return np.argsort(d2, kind="stable")[:k]


def gradient_traces(problem, tracked, window, config):
    """``(window, len(tracked))`` array of gradient entries after each of the first outer iterations."""
    rows = []

    def grab(state, ws):
        rows.append(state.grad[tracked].copy())

    cfg = SolveConfig(m=config.m, kappa=config.kappa, tol=config.tol, max_outer_iters=window,
                      rng_seed=config.rng_seed, subproblem_factorization=config.subproblem_factorization)
    gbcd_solve(problem, cfg, callback=grab)
    if len(rows) < window:
        raise ContractViolation(
            f"solver stopped after {len(rows)} outer iterations, fewer than the window of {window}"
        )
    return np.array(rows)


def correlation_histogram(problem, spec, config, probes, neighbors, system="y"):
    tracked = np.unique(np.concatenate([probes, neighbors.reshape(-1)]))
    col = {int(j): c for c, j in enumerate(tracked)}
    traces = gradient_traces(problem, tracked, spec.window, config)
    coeffs = []
    skipped = 0
    for p, nbrs in zip(probes, neighbors):
        tp = traces[:, col[int(p)]]
        for q in nbrs:
            c = correlation(tp, traces[:, col[int(q)]])
            if c is None:
                skipped += 1
            else:
                coeffs.append(c)
    coeffs = np.array(coeffs)
    edges = np.asarray(spec.bin_edges, dtype=float)
    counts, _ = np.histogram(coeffs, bins=edges)
    return CorrelationHistogram(system, edges, counts, coeffs, skipped)


def run_correlation_diagnostic(X, y, kernel_spec, spec=None, config=None, rng_seed=0,
                               kstar_point=None, systems=("y", "kstar")):
    """Histogram neighbour gradient correlations for the requested systems.

    ``kstar_point`` is the test input whose cross-covariance vector forms the
    ``rhs = k*`` system; by default a random training input is used.
    Returns a dict ``system -> CorrelationHistogram``.
    """
    spec = spec or CorrelationDiagnosticSpec()
    config = config or SolveConfig(tol=1e-12)
    problem = Problem(X, y, kernel_spec)
    n = problem.n
    spec.validate(n)
    rng = np.random.default_rng(rng_seed)
    probes = np.sort(rng.choice(n, size=spec.probe_count, replace=False))
    neighbors = np.array([nearest_neighbors(problem.X, int(p), spec.neighbor_count) for p in probes])
    out = {}
    for system in systems:
        if system == "y":
            sub = problem
        elif system == "kstar":
            if kstar_point is None:
                xs = problem.X[int(rng.integers(n))][None, :]
            else:
                xs = np.asarray(kstar_point, dtype=float).reshape(1, -1)
            sub = problem.with_rhs(problem.ops.cross(xs)[0])
        else:
            raise ContractViolation(f"unknown system {system!r}")
        out[system] = correlation_histogram(sub, spec, config, probes, neighbors, system)
    return out
