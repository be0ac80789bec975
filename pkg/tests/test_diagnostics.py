import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gbcdgp.diagnostics import (
    CorrelationDiagnosticSpec,
    correlation,
    nearest_neighbors,
    run_correlation_diagnostic,
)
from gbcdgp.errors import ContractViolation
from gbcdgp.gbcd import SolveConfig
from gbcdgp.kernels import KernelSpec


class TestCorrelation:
    def test_known(self):
        assert correlation([1, 2, 3], [2, 4, 6]) == 1.0
        assert correlation([1, 2, 3], [3, 2, 1]) == -1.0
        assert correlation([1, 2, 3, 4], [1, -1, -1, 1]) == 0.0

    def test_constant_trace(self):
        assert correlation([1, 1, 1], [1, 2, 3]) is None

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.integers(2, 60), elements=st.floats(-1e6, 1e6)))
    def test_self_and_negated(self, a):
        c = correlation(a, a)
        if c is not None:
            assert c == 1.0
            assert correlation(a, -a) == -1.0


def test_nearest_neighbors():
    X = np.array([[0.0], [5.0], [1.0], [-1.5], [0.5]])
    np.testing.assert_array_equal(nearest_neighbors(X, 0, 3), [4, 2, 3])


class TestDiagnostic:
    @pytest.fixture(scope="class")
    @staticmethod
    def result():
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(300, 2))
        y = np.sin(6 * X[:, 0]) + 0.1 * rng.normal(size=300)
        spec = CorrelationDiagnosticSpec(probe_count=10, neighbor_count=8, window=12)
        return run_correlation_diagnostic(X, y, KernelSpec((5.0, 5.0), 0.05), spec,
                                          SolveConfig(m=20, kappa=10, tol=1e-12), rng_seed=1)

    def test_mass_is_pair_count(self, result):
        for h in result.values():
            assert h.counts.sum() == h.pairs
            assert h.pairs + h.skipped == 10 * 8
            assert np.all((h.coefficients >= -1) & (h.coefficients <= 1))
            assert len(h.edges) == 11

    def test_deterministic(self, result):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(300, 2))
        y = np.sin(6 * X[:, 0]) + 0.1 * rng.normal(size=300)
        spec = CorrelationDiagnosticSpec(probe_count=10, neighbor_count=8, window=12)
        again = run_correlation_diagnostic(X, y, KernelSpec((5.0, 5.0), 0.05), spec,
                                           SolveConfig(m=20, kappa=10, tol=1e-12), rng_seed=1)
        for key in result:
            np.testing.assert_array_equal(result[key].coefficients, again[key].coefficients)

    def test_window_longer_than_run(self):
        X = np.arange(20.0)[:, None]
        spec = CorrelationDiagnosticSpec(probe_count=2, neighbor_count=2, window=10)
        with pytest.raises(ContractViolation, match="window"):
            run_correlation_diagnostic(X, np.ones(20), KernelSpec((1e6,), 0.5), spec,
                                       SolveConfig(m=20, kappa=5, tol=1e-3), systems=("y",))

    @pytest.mark.parametrize("kw", [dict(probe_count=0), dict(neighbor_count=20), dict(window=1),
                                    dict(bin_edges=np.array([-0.5, 1.0]))])
    def test_bad_spec(self, kw):
        with pytest.raises(ContractViolation):
            CorrelationDiagnosticSpec(**kw).validate(20)
