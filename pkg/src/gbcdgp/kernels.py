"""ARD squared-exponential kernel served column by column.

The full ``n x n`` covariance matrix is never stored.  A :class:`KernelOperator`
hands out columns of ``Kbar = K + sigma_sq * I`` on demand, optionally keeping
a bounded number of them in a :class:`ColumnCache`, and counts every kernel
evaluation it performs so solvers can report their cost in the same currency.

Distances are accumulated attribute by attribute, left to right, using only
elementwise operations.  This makes ``k(a, b) == k(b, a)`` hold bitwise and
makes a column identical no matter how it was batched.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

__all__ = [
    "KernelSpec",
    "ColumnCache",
    "EvalCounter",
    "KernelOperator",
    "as_input_matrix",
    "kernel_eval",
    "regularized_column",
    "regularized_submatrix",
]


@dataclass(frozen=True)
class KernelSpec:
    """Inverse squared length-scales ``gamma`` (one per attribute) and noise variance."""

    gamma: tuple
    sigma_sq: float

    def __post_init__(self):
        gamma = tuple(float(g) for g in np.atleast_1d(np.asarray(self.gamma, dtype=float)))
        if len(gamma) == 0:
            raise ContractViolation("gamma must have at least one entry")
        if not all(np.isfinite(g) and g >= 0.0 for g in gamma):
            raise ContractViolation(f"gamma entries must be finite and >= 0, got {gamma}")
        sigma_sq = float(self.sigma_sq)
        if not (np.isfinite(sigma_sq) and sigma_sq > 0.0):
            raise ContractViolation(f"sigma_sq must be positive, got {self.sigma_sq}")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "sigma_sq", sigma_sq)

    @classmethod
    def broadcast(cls, gamma, d, sigma_sq):
        """Build a spec for ``d`` attributes; a single gamma value is repeated."""
        g = np.atleast_1d(np.asarray(gamma, dtype=float))
        if g.size == 1:
            g = np.repeat(g, d)
        elif g.size != d:
            raise ContractViolation(f"got {g.size} gamma values for {d} attributes")
        return cls(tuple(g), sigma_sq)

    @property
    def d(self):
        return len(self.gamma)

    def check_dim(self, d):
        if d != self.d:
            raise ContractViolation(f"kernel spec has {self.d} attributes, inputs have {d}")


def as_input_matrix(X):
    """Validate and return ``X`` as a C-contiguous float64 ``(n, d)`` array."""
    X = np.array(X, dtype=np.float64, ndmin=2, copy=True)
    if X.ndim != 2:
        raise ContractViolation(f"input matrix must be 2-D, got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise ContractViolation(f"input matrix needs n >= 1 and d >= 1, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ContractViolation("input matrix contains non-finite values")
    return np.ascontiguousarray(X)


def _weighted_sqdist(AT, BT, gamma):
    """Weighted squared distances between columns of ``AT`` (d, p) and ``BT`` (d, q).

    Returns a C-contiguous ``(p, q)`` array.  Attributes with zero weight are
    skipped; adding an exact ``+0.0`` would not change the sum anyway.
    """
    acc = np.zeros((AT.shape[1], BT.shape[1]))
    for l, g in enumerate(gamma):
        if g == 0.0:
            continue
        diff = AT[l][:, None] - BT[l][None, :]
        diff *= diff
        diff *= g
        acc += diff
    return acc


def _se(AT, BT, gamma):
    acc = _weighted_sqdist(AT, BT, gamma)
    np.negative(acc, out=acc)
    np.exp(acc, out=acc)
    return acc


def kernel_eval(xi, xj, spec):
    """``exp(-sum_l gamma_l (xi_l - xj_l)^2)`` for two single input rows."""
    xi = np.asarray(xi, dtype=np.float64).reshape(-1)
    xj = np.asarray(xj, dtype=np.float64).reshape(-1)
    if xi.shape != xj.shape:
        raise ContractViolation(f"row lengths differ: {xi.size} vs {xj.size}")
    spec.check_dim(xi.size)
    return float(_se(xi[:, None], xj[:, None], spec.gamma)[0, 0])


class EvalCounter:
    """Thread-safe running count of kernel evaluations."""

    def __init__(self):
        self._lock = threading.Lock()
        self._value = 0

    def add(self, k):
        with self._lock:
            self._value += int(k)

    @property
    def value(self):
        return self._value


class ColumnCache:
    """Bounded LRU store of kernel columns; a budget of 0 disables it."""

    def __init__(self, budget_columns=0):
        if budget_columns < 0:
            raise ContractViolation("cache budget must be >= 0")
        self.budget_columns = int(budget_columns)
        self._stored = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._stored)

    def get(self, j):
        if self.budget_columns == 0:
            return None
        with self._lock:
            col = self._stored.get(j)
            if col is None:
                self.misses += 1
                return None
            self._stored.move_to_end(j)
            self.hits += 1
            return col

    def put(self, j, col):
        if self.budget_columns == 0:
            return
        col = col.copy()
        col.setflags(write=False)
        with self._lock:
            self._stored[j] = col
            self._stored.move_to_end(j)
            while len(self._stored) > self.budget_columns:
                self._stored.popitem(last=False)


class KernelOperator:
    """On-demand access to ``Kbar = K + sigma_sq * I`` for a fixed input matrix."""

    def __init__(self, X, spec, cache_columns=0):
        X = as_input_matrix(X)
        spec.check_dim(X.shape[1])
        self.X = X
        self.XT = np.ascontiguousarray(X.T)
        self.spec = spec
        self.n, self.d = X.shape
        self.cache = ColumnCache(cache_columns)
        self.counter = EvalCounter()

    @property
    def evals(self):
        return self.counter.value

    def _check_index(self, j):
        if not (0 <= j < self.n):
            raise ContractViolation(f"column index {j} out of range for n={self.n}")

    def kernel_column(self, j):
        """Column ``j`` of the unregularized ``K`` (no noise on the diagonal)."""
        j = int(j)
        self._check_index(j)
        cached = self.cache.get(j)
        if cached is not None:
            return cached.copy()
        col = _se(self.XT, self.XT[:, j : j + 1], self.spec.gamma)[:, 0].copy()
        self.counter.add(self.n)
        self.cache.put(j, col)
        return col

    def column(self, j):
        """Column ``j`` of ``Kbar``."""
        col = self.kernel_column(j)
        col[int(j)] += self.spec.sigma_sq
        return col

    def columns(self, idx, out=None):
        """Stack the ``Kbar`` columns listed in ``idx`` into an ``(n, len(idx))`` array."""
        idx = np.asarray(idx, dtype=np.intp).reshape(-1)
        if out is None:
            out = np.empty((self.n, idx.size))
        for c, j in enumerate(idx):
            out[:, c] = self.column(j)
        return out

    def diagonal(self):
        """``k(x_i, x_i) + sigma_sq`` for every i."""
        self.counter.add(self.n)
        # the weighted distance of a point to itself is exactly 0
        return np.exp(-np.zeros(self.n)) + self.spec.sigma_sq

    def submatrix(self, B):
        B = np.asarray(B, dtype=np.intp).reshape(-1)
        if np.unique(B).size != B.size:
            raise ContractViolation("active set contains duplicate indices")
        for j in B:
            self._check_index(int(j))
        sub = _se(self.XT[:, B], self.XT[:, B], self.spec.gamma)
        self.counter.add(B.size * B.size)
        sub[np.diag_indices_from(sub)] += self.spec.sigma_sq
        return sub

    def matvec(self, v, chunk=256):
        """``Kbar @ v`` assembled from streamed column blocks."""
        v = np.asarray(v, dtype=np.float64)
        out = v * self.spec.sigma_sq
        for start in range(0, self.n, chunk):
            stop = min(start + chunk, self.n)
            block = _se(self.XT, self.XT[:, start:stop], self.spec.gamma)
            self.counter.add(self.n * (stop - start))
            out += block @ v[start:stop]
        return out

    def cross(self, Xstar):
        """``(t, n)`` matrix of ``k(x*_j, x_i)``; no noise term."""
        Xstar = as_input_matrix(Xstar)
        self.spec.check_dim(Xstar.shape[1])
        K = _se(np.ascontiguousarray(Xstar.T), self.XT, self.spec.gamma)
        self.counter.add(K.size)
        return K

    def dense(self):
        """Materialize the whole ``Kbar``; only for direct solves and audits."""
        K = _se(self.XT, self.XT, self.spec.gamma)
        self.counter.add(K.size)
        K[np.diag_indices_from(K)] += self.spec.sigma_sq
        return K


def regularized_column(X, j, spec):
    """Column ``j`` of ``K + sigma_sq * I`` for inputs ``X``."""
    return KernelOperator(X, spec).column(j)


def regularized_submatrix(X, B, spec):
    """``Kbar`` restricted to rows and columns ``B`` (in the order given)."""
    return KernelOperator(X, spec).submatrix(B)
