"""Delimited output tables and run manifests.

Every table starts with one ``#`` metadata line (package version, seed,
config digest, solver tag), followed by a one-line comma-separated header and
the data rows.  Floats are written with 17 significant digits so they read
back exactly.  Nothing time-dependent is written unless the caller passes
timing values explicitly, which keeps reruns byte-identical.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from . import __version__


def config_digest(config):
    """Short SHA-256 of the canonical JSON form of ``config``."""
    blob = json.dumps(config, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if np.isnan(v):
            return "nan"
        return f"{v:.17g}"
    if v is None:
        return ""
    return str(v).replace(",", ";").replace("\n", " ")


def meta_line(seed, digest, solver, **extra):
    parts = [f"gbcdgp_version={__version__}", f"seed={seed}", f"config_digest={digest}", f"solver={solver}"]
    parts += [f"{k}={v}" for k, v in extra.items()]
    return "# " + " ".join(parts)


def write_table(path, columns, rows, meta, comments=()):
    with open(path, "w") as fh:
        fh.write(meta + "\n")
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_table(path):
    """Return ``(meta, columns, data)``; ``meta`` merges all ``key=value`` comment tokens."""
    meta = {}
    columns = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = v
                continue
            if not line.strip():
                continue
            if columns is None:
                columns = line.split(",")
                continue
            rows.append(line.split(","))
    return meta, columns, rows


def write_manifest(path, entries):
    """``key=value`` per line, keys sorted."""
    with open(path, "w") as fh:
        for k in sorted(entries):
            fh.write(f"{k}={fmt(entries[k])}\n")


def read_manifest(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#") and "=" in line:
                k, v = line.split("=", 1)
                out[k] = v
    return out


def trace_rows(report, timing=False):
    """Trace rows for :data:`gbcdgp.problem.TRACE_COLUMNS`; seconds are ``nan`` unless ``timing``."""
    for r in report.objective_trace:
        yield (r.iteration, r.objective, r.grad_inf_norm, r.seconds if timing else float("nan"), r.kernel_evals)
