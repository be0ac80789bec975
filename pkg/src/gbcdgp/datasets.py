"""Dataset loading, synthetic generation, splitting and standardization.

Friedman #1 (Friedman, 1991, "Multivariate adaptive regression splines")::

    y = 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5,   x ~ U[0, 1]^10

Attributes 6-10 do not enter the target.  Standardization uses the
population (1/n) variance and is always fitted on the training split only.
"""

from __future__ import annotations

import logging
import re
from importlib import resources
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractViolation, RefusalError

logger = logging.getLogger(__name__)

FRIEDMAN1_DIM = 10


@dataclass(frozen=True)
class StandardizationParams:
    input_shift: np.ndarray
    input_scale: np.ndarray
    output_shift: float
    output_scale: float


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    name: str = "dataset"
    standardization: StandardizationParams | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if X.ndim != 2:
            raise ContractViolation(f"X must be 2-D, got shape {X.shape}")
        if X.shape[0] != y.size:
            raise ContractViolation(f"X has {X.shape[0]} rows but y has {y.size} entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


def bundled_path(name="tiny.csv"):
    """Path of a dataset shipped with the package (``tiny.csv``: 40 noisy Friedman #1 rows)."""
    return str(resources.files("gbcdgp") / "data" / name)


_SPLIT = re.compile(r"[,\s]+")


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_table(path, target_col=-1, header=False, delimiter=None):
    """Read a comma- or whitespace-delimited numeric table.

    ``target_col`` selects the target column (negative values count from the
    end); every other column is an input attribute.  Lines starting with
    ``#`` and blank lines are skipped.  ``header`` is ``True`` (first data
    line is a header), ``False``, or ``"auto"`` (skip the first data line
    only if none of its cells is numeric).  Parse errors and non-finite
    values raise :class:`ContractViolation` naming the 1-based line and column.
    """
    rows = []
    width = None
    first = True
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            cells = text.split(delimiter) if delimiter else _SPLIT.split(text)
            cells = [c.strip() for c in cells]
            if first:
                first = False
                if header is True or (header == "auto" and not any(_is_number(c) for c in cells)):
                    continue
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ContractViolation(f"{path}: line {lineno} has {len(cells)} columns, expected {width}")
            vals = []
            for col, cell in enumerate(cells, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise ContractViolation(
                        f"{path}: line {lineno}, column {col}: cannot parse {cell!r} as a number"
                    ) from None
                if not np.isfinite(v):
                    raise ContractViolation(f"{path}: line {lineno}, column {col}: non-finite value {cell!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ContractViolation(f"{path}: no data rows")
    data = np.array(rows)
    if width < 2:
        raise ContractViolation(f"{path}: need at least one input column and a target column")
    tc = target_col % width if -width <= target_col < width else None
    if tc is None:
        raise ContractViolation(f"target column {target_col} out of range for {width} columns")
    keep = [c for c in range(width) if c != tc]
    logger.info("loaded %s: %d rows, %d attributes", path, data.shape[0], len(keep))
    return Dataset(data[:, keep], data[:, tc], name=str(path))


def save_table(path, ds, header=True, comments=()):
    """Write ``ds`` as comma-separated text, target in the last column."""
    d = ds.d
    with open(path, "w") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        if header:
            fh.write(",".join([f"x{i}" for i in range(d)] + ["y"]) + "\n")
        for xi, yi in zip(ds.X, ds.y):
            fh.write(",".join(f"{v:.17g}" for v in (*xi, yi)) + "\n")


def fit_standardization(train):
    """Per-attribute mean/std of the training inputs and outputs.

    Constant attributes get scale 1 (a warning is logged) so the transform
    stays invertible.
    """
    X, y = train.X, train.y
    shift = X.mean(axis=0)
    scale = X.std(axis=0)
    const = scale == 0
    if np.any(const):
        logger.warning("constant attributes %s left unscaled", np.flatnonzero(const).tolist())
        scale = np.where(const, 1.0, scale)
    yshift = float(y.mean())
    yscale = float(y.std())
    if yscale == 0:
        logger.warning("constant target left unscaled")
        yscale = 1.0
    return StandardizationParams(shift, scale, yshift, yscale)


def apply_standardization(ds, params):
    X = (ds.X - params.input_shift) / params.input_scale
    y = (ds.y - params.output_shift) / params.output_scale
    return replace(ds, X=X, y=y, standardization=params)


def invert_standardization(ds, params):
    X = ds.X * params.input_scale + params.input_shift
    y = ds.y * params.output_scale + params.output_shift
    return replace(ds, X=X, y=y, standardization=None)


def friedman1_target(X):
    X = np.asarray(X, dtype=np.float64)
    return (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.5) ** 2
        + 10.0 * X[:, 3]
        + 5.0 * X[:, 4]
    )


def friedman1_generate(n, rng_seed=0):
    """``n`` noiseless Friedman #1 samples with inputs uniform on ``[0, 1]^10``."""
    if n < 1:
        raise ContractViolation("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    X = rng.uniform(0.0, 1.0, size=(n, FRIEDMAN1_DIM))
    return Dataset(X, friedman1_target(X), name="friedman1")


def add_target_noise(ds, std, rng_seed=0):
    """Add i.i.d. ``Normal(0, std^2)`` noise to the targets."""
    if std < 0:
        raise ContractViolation("noise std must be >= 0")
    if std == 0:
        return ds
    rng = np.random.default_rng(rng_seed)
    return replace(ds, y=ds.y + rng.normal(0.0, std, size=ds.n))


def split(ds, train_count, test_count, rng_seed=0):
    """Disjoint random train/test subsets drawn from one permutation."""
    if train_count < 0 or test_count < 0 or train_count + test_count > ds.n:
        raise RefusalError(f"cannot take {train_count} + {test_count} samples from {ds.n}")
    perm = np.random.default_rng(rng_seed).permutation(ds.n)
    tr = perm[:train_count]
    te = perm[train_count : train_count + test_count]
    return (
        replace(ds, X=ds.X[tr], y=ds.y[tr], name=f"{ds.name}[train]"),
        replace(ds, X=ds.X[te], y=ds.y[te], name=f"{ds.name}[test]"),
    )


def friedman1_benchmark(n_train, n_test, noise_std=1.0, rng_seed=0):
    """Standardized Friedman #1 train/test pair; noise goes on training targets only.

    Returns ``(train, test, params)`` where both splits are already
    standardized with ``params`` fitted on the (noisy) training split.
    """
    full = friedman1_generate(n_train + n_test, rng_seed)
    train, test = split(full, n_train, n_test, rng_seed + 1)
    train = add_target_noise(train, noise_std, rng_seed + 2)
    params = fit_standardization(train)
    return apply_standardization(train, params), apply_standardization(test, params), params
