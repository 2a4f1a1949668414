import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diarmetric import _kernels_py as py
from diarmetric import kernels

try:
    from diarmetric import _kernels as cy
except ImportError:  # extension not built
    cy = None

needs_ext = pytest.mark.skipif(cy is None, reason="compiled kernels not built")


def _tuples(rng, n, m, width):
    return np.array([rng.choice(n, size=width, replace=False) for _ in range(m)], dtype=np.int64).reshape(-1, width)


class TestPythonKernels:
    def test_pairwise(self):
        Z = np.random.default_rng(0).normal(size=(7, 3))
        expected = ((Z[:, None] - Z[None]) ** 2).sum(-1)
        np.testing.assert_allclose(py.pairwise_sq_dists(Z), expected, atol=1e-12)
        assert np.all(np.diag(py.pairwise_sq_dists(Z)) == 0)

    def test_lloyd_assign(self):
        Z = np.array([[0.0], [1.0], [9.0]])
        labels, d = py.lloyd_assign(Z, np.array([[0.0], [10.0]]))
        assert labels.tolist() == [0, 0, 1] and d.tolist() == [0, 1, 1]

    def test_tuple_hinge_empty(self):
        v, G = py.tuple_hinge(np.ones((3, 2)), np.zeros((0, 3), np.int64), 0.8, 0.4)
        assert v.size == 0 and not G.any()


class TestDispatch:
    def test_backend_name(self):
        assert kernels.BACKEND == ("cython" if cy is not None else "python")

    def test_forced_fallback(self):
        env = dict(os.environ, DIARMETRIC_PURE_PYTHON="1")
        out = subprocess.run([sys.executable, "-c", "from diarmetric import kernels; print(kernels.BACKEND)"],
                             env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "python"


@needs_ext
class TestCompiledMatchesPython:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 30), st.integers(1, 12), st.integers(0, 10_000))
    def test_pairwise(self, n, e, seed):
        Z = np.random.default_rng(seed).normal(size=(n, e))
        np.testing.assert_allclose(cy.pairwise_sq_dists(Z), py.pairwise_sq_dists(Z), rtol=0, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 40), st.integers(1, 6), st.integers(1, 8), st.integers(0, 10_000))
    def test_lloyd_assign(self, n, k, e, seed):
        rng = np.random.default_rng(seed)
        Z, C = rng.normal(size=(n, e)), rng.normal(size=(k, e))
        la, da = cy.lloyd_assign(Z, C)
        lb, db = py.lloyd_assign(Z, C)
        assert np.array_equal(la, lb)
        np.testing.assert_allclose(da, db, rtol=0, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(4, 20), st.integers(0, 30), st.sampled_from([3, 4]), st.integers(0, 10_000))
    def test_tuple_hinge(self, n, m, width, seed):
        rng = np.random.default_rng(seed)
        Z = rng.normal(size=(n, 5)) * 0.5
        T = _tuples(rng, n, m, width)
        va, Ga = cy.tuple_hinge(Z, T, 0.8, 0.4)
        vb, Gb = py.tuple_hinge(Z, T, 0.8, 0.4)
        np.testing.assert_allclose(va, vb, rtol=0, atol=1e-12)
        np.testing.assert_allclose(Ga, Gb, rtol=0, atol=1e-12)
