import filecmp
import os

import numpy as np
import pytest

from gbcdgp.cli import main, read_model
from gbcdgp.datasets import bundled_path, friedman1_generate, load_table
from gbcdgp.reporting import read_manifest, read_table

TINY = bundled_path()


def run(*argv):
    return main([str(a) for a in argv])


def test_train_direct_single_row(tmp_path):
    assert run("train", "--dataset", TINY, "--solver", "direct", "--out-dir", tmp_path) == 0
    meta, cols, rows = read_table(tmp_path / "trace.csv")
    assert cols == ["iteration", "objective", "grad_inf_norm", "seconds", "kernel_evals"]
    assert len(rows) == 1
    assert meta["solver"] == "direct" and meta["seed"] == "0" and "config_digest" in meta
    man = read_manifest(tmp_path / "manifest.txt")
    assert man["flag.solver"] == "direct" and man["exit_code"] == "0"
    model, params, _ = read_model(tmp_path / "model.csv")
    assert model.alpha.shape == (40,) and params is not None


def test_train_forced_nonconvergence(tmp_path):
    code = run("train", "--dataset", TINY, "--m", 5, "--max-iters", 0, "--out-dir", tmp_path)
    assert code == 3
    _, _, rows = read_table(tmp_path / "trace.csv")
    assert len(rows) == 1
    assert read_manifest(tmp_path / "report.txt")["converged"] == "0"


@pytest.mark.parametrize("solver", ["gbcd", "cg", "bcdg", "smo", "direct"])
def test_train_deterministic(tmp_path, solver):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("train", "--dataset", TINY, "--solver", solver, "--m", 8, "--kappa", 5,
                   "--tol", 1e-6, "--max-iters", 100_000, "--seed", 3, "--out-dir", out) == 0
    for name in ("trace.csv", "model.csv", "report.txt", "manifest.txt"):
        assert filecmp.cmp(a / name, b / name, shallow=False), name


def test_timing_is_opt_in(tmp_path):
    run("train", "--dataset", TINY, "--m", 8, "--out-dir", tmp_path)
    _, _, rows = read_table(tmp_path / "trace.csv")
    assert all(r[3] == "nan" for r in rows)
    run("train", "--dataset", TINY, "--m", 8, "--timing", "--out-dir", tmp_path)
    _, _, rows = read_table(tmp_path / "trace.csv")
    assert all(r[3] != "nan" for r in rows)


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as info:
        run("train", "--dataset", TINY, "--solver", "lsqr")
    assert info.value.code == 2
    assert run("train", "--dataset", tmp_path / "missing.csv", "--out-dir", tmp_path) == 2
    assert run("train", "--dataset", TINY, "--gamma", "1,2", "--out-dir", tmp_path) == 2
    assert run("train", "--dataset", TINY, "--sigma-sq", 0, "--out-dir", tmp_path) == 2
    assert run("bench", "--dataset", TINY, "--solver", "", "--out-dir", tmp_path) == 2


def test_numerical_failure_exit_code(tmp_path):
    # duplicated inputs and a vanishing noise term make Kbar singular in double precision
    path = tmp_path / "dup.csv"
    path.write_text("".join(f"{x},{y}\n" for x, y in [(0, 1), (0, 2), (1, 0), (1, 3)]))
    code = run("train", "--dataset", path, "--solver", "direct", "--gamma", 1, "--sigma-sq", 1e-300,
               "--no-standardize", "--out-dir", tmp_path)
    assert code == 4


class TestPredict:
    @pytest.fixture(scope="class")
    @staticmethod
    def trained(tmp_path_factory):
        out = tmp_path_factory.mktemp("model")
        assert run("train", "--dataset", TINY, "--solver", "direct", "--out-dir", out) == 0
        return out

    def test_training_set_fit(self, trained, tmp_path):
        assert run("predict", "--model", trained / "model.csv", "--dataset", TINY, "--out-dir", tmp_path) == 0
        _, cols, rows = read_table(tmp_path / "predictions.csv")
        assert cols == ["point_id", "mean"]
        _, cols, rows = read_table(tmp_path / "summary.csv")
        summary = dict(zip(cols, rows[0]))
        assert float(summary["rmse"]) < 0.5
        assert summary["variance_time"] == "nan"

    def test_variance_matches_dense(self, trained, tmp_path):
        assert run("predict", "--model", trained / "model.csv", "--dataset", TINY, "--variance",
                   "--solver", "gbcd", "--tol", 1e-10, "--m", 10, "--out-dir", tmp_path / "g") == 0
        assert run("predict", "--model", trained / "model.csv", "--dataset", TINY, "--variance",
                   "--solver", "direct", "--out-dir", tmp_path / "d") == 0
        _, cols, g = read_table(tmp_path / "g" / "predictions.csv")
        _, _, d = read_table(tmp_path / "d" / "predictions.csv")
        assert cols == ["point_id", "mean", "variance", "inner_iters"]
        vg = np.array([float(r[2]) for r in g])
        vd = np.array([float(r[2]) for r in d])
        np.testing.assert_allclose(vg, vd, rtol=1e-6)

    def test_dimension_mismatch(self, trained, tmp_path):
        path = tmp_path / "narrow.csv"
        path.write_text("1,2,3\n4,5,6\n")
        assert run("predict", "--model", trained / "model.csv", "--dataset", path, "--out-dir", tmp_path) == 2

    def test_inputs_only(self, trained, tmp_path):
        ds = load_table(TINY, header="auto")
        path = tmp_path / "inputs.csv"
        np.savetxt(path, ds.X, delimiter=",")
        assert run("predict", "--model", trained / "model.csv", "--dataset", path, "--no-targets",
                   "--out-dir", tmp_path) == 0
        _, cols, _ = read_table(tmp_path / "summary.csv")
        assert "rmse" not in cols


def test_gen_data(tmp_path):
    assert run("gen-data", "--n", 25, "--seed", 4, "--out-dir", tmp_path) == 0
    ds = load_table(tmp_path / "friedman1.csv", header="auto")
    np.testing.assert_array_equal(ds.X, friedman1_generate(25, 4).X)


def test_bench_rows_and_agreement(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "data.csv"
    X = rng.uniform(size=(400, 2))
    y = np.sin(4 * X[:, 0]) + X[:, 1] + 0.1 * rng.normal(size=400)
    np.savetxt(path, np.column_stack([X, y]), delimiter=",")
    code = run("bench", "--dataset", path, "--n-train", 300, "--n-test", 100, "--gamma", 1.0,
               "--sigma-sq", 0.1, "--solver", "gbcd,direct,cg,bcdc,bcdg,smo", "--m", 50, "--kappa", 20,
               "--tol", 1e-6, "--max-iters", 200_000, "--out-dir", tmp_path / "out")
    assert code == 0
    meta, cols, rows = read_table(tmp_path / "out" / "bench.csv")
    assert [r[0] for r in rows] == ["gbcd", "direct", "cg", "bcdc", "bcdg", "smo"]
    rmse = np.array([float(r[cols.index("rmse")]) for r in rows])
    assert np.ptp(rmse) <= 1e-4
    for r in rows:
        assert os.path.exists(tmp_path / "out" / f"trace_{r[0]}.csv")


def test_bench_generated_deterministic(tmp_path):
    args = ["bench", "--generate", "friedman1", "--n-train", 200, "--n-test", 50, "--solver", "gbcd,bcdg",
            "--gamma", 2.0, "--sigma-sq", 1.0, "--m", 40, "--kappa", 10, "--seed", 2]
    assert run(*args, "--out-dir", tmp_path / "a") == 0
    assert run(*args, "--out-dir", tmp_path / "b") == 0
    for name in sorted(os.listdir(tmp_path / "a")):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False), name


def test_correlate(tmp_path):
    code = run("correlate", "--generate", "friedman1", "--n-train", 300, "--n-test", 10,
               "--probes", 10, "--neighbors", 5, "--window", 10, "--m", 20, "--kappa", 10,
               "--out-dir", tmp_path)
    assert code == 0
    _, cols, rows = read_table(tmp_path / "correlation.csv")
    _, scols, srows = read_table(tmp_path / "correlation_summary.csv")
    for s in srows:
        summary = dict(zip(scols, s))
        counts = [int(r[cols.index("count")]) for r in rows if r[0] == summary["system"]]
        assert len(counts) == 10
        assert sum(counts) == int(summary["pairs"])
        assert int(summary["pairs"]) + int(summary["skipped"]) == 50


def test_correlate_window_too_long(tmp_path):
    code = run("correlate", "--generate", "friedman1", "--n-train", 50, "--probes", 5, "--neighbors", 5,
               "--window", 10, "--m", 50, "--tol", 1e-2, "--out-dir", tmp_path)
    assert code == 2
