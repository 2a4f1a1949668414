import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from diarmetric.losses import (
    MarginSpec,
    adaptive_margin,
    batch_loss,
    quadruplet_loss,
    sq_dist,
    triplet_loss,
    tuple_sq_dists,
)


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def points_with(dap, dan, e=3):
    """Anchor at the origin with positive / negative at the requested squared distances."""
    za = np.zeros(e)
    zp = np.zeros(e)
    zp[0] = np.sqrt(dap)
    zn = np.zeros(e)
    zn[1] = np.sqrt(dan)
    return za, zp, zn


vectors = st.integers(0, 2**31 - 1).map(lambda s: np.random.default_rng(s).normal(size=(4, 5)))


class TestSqDist:
    def test_identity(self):
        assert sq_dist([1.0, 2.0], [1.0, 2.0]) == 0

    def test_orthonormal(self):
        assert sq_dist([1, 0], [0, 1]) == 2

    def test_antipodal(self):
        assert sq_dist(unit([1, 1]), -unit([1, 1])) == pytest.approx(4)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            sq_dist([1, 0], [1, 0, 0])


class TestTriplet:
    def test_inactive(self):
        out = triplet_loss(*points_with(0.0, 1.0), 0.8)
        assert out.value == 0 and all(not g.any() for g in out.grads)

    def test_scalar_value(self):
        assert triplet_loss(*points_with(1.0, 1.0), 0.8).value == pytest.approx(0.8, abs=1e-12)

    def test_boundary(self):
        za, zp, zn = np.zeros(1), np.array([0.5]), np.array([1.0])  # dap 0.25, dan 1.0, alpha 0.75
        assert triplet_loss(za, zp, zn, 0.75).value == 0

    @settings(max_examples=100, deadline=None)
    @given(vectors, st.floats(0.05, 2.0))
    def test_gradients_match_finite_differences(self, Z, alpha):
        za, zp, zn, _ = Z
        h = sq_dist(za, zp) - sq_dist(za, zn) + alpha
        assume(abs(h) > 1e-3)
        out = triplet_loss(za, zp, zn, alpha)
        _check_fd(lambda a, p, n: triplet_loss(a, p, n, alpha).value, [za, zp, zn], out.grads)

    @settings(max_examples=100, deadline=None)
    @given(vectors, st.floats(0.05, 2.0))
    def test_non_negative_and_zero_iff_satisfied(self, Z, alpha):
        za, zp, zn, _ = Z
        v = triplet_loss(za, zp, zn, alpha).value
        assert v >= 0
        assert (v == 0) == (sq_dist(za, zn) >= sq_dist(za, zp) + alpha)


class TestQuadruplet:
    def test_both_inactive(self):
        za, zp, zn = points_with(0.0, 4.0)
        zq = zn + np.array([0, 0, 3.0])
        out = quadruplet_loss(za, zp, zn, zq, 0.8, 0.4)
        assert out.value == 0 and all(not g.any() for g in out.grads)

    def test_scalar_value(self):
        za, zp, zn = points_with(1.0, 1.0)
        zq = zn + np.array([0, 0, 1.0])
        assert quadruplet_loss(za, zp, zn, zq, 0.8, 0.4).value == pytest.approx(1.2, abs=1e-12)

    def test_small_second_margin_limit(self):
        rng = np.random.default_rng(0)
        za, zp, zn, zq = rng.normal(size=(4, 3))
        first = triplet_loss(za, zp, zn, 0.8).value
        limit = max(0.0, sq_dist(za, zp) - sq_dist(zq, zn))
        assert quadruplet_loss(za, zp, zn, zq, 0.8, 1e-12).value - first == pytest.approx(limit, abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(vectors, st.floats(0.05, 2.0), st.floats(0.05, 2.0))
    def test_first_term_is_triplet(self, Z, a1, a2):
        za, zp, zn, zq = Z
        second = max(0.0, sq_dist(za, zp) - sq_dist(zq, zn) + a2)
        total = quadruplet_loss(za, zp, zn, zq, a1, a2).value
        assert total - second == pytest.approx(triplet_loss(za, zp, zn, a1).value, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(vectors, st.floats(0.05, 2.0), st.floats(0.05, 2.0))
    def test_gradients_match_finite_differences(self, Z, a1, a2):
        za, zp, zn, zq = Z
        assume(abs(sq_dist(za, zp) - sq_dist(za, zn) + a1) > 1e-3)
        assume(abs(sq_dist(za, zp) - sq_dist(zq, zn) + a2) > 1e-3)
        out = quadruplet_loss(za, zp, zn, zq, a1, a2)
        _check_fd(lambda a, p, n, q: quadruplet_loss(a, p, n, q, a1, a2).value, [za, zp, zn, zq], out.grads)


def _check_fd(f, args, grads, h=1e-6):
    for i, g in enumerate(grads):
        for j in range(args[i].size):
            plus = [a.copy() for a in args]
            minus = [a.copy() for a in args]
            plus[i][j] += h
            minus[i][j] -= h
            num = (f(*plus) - f(*minus)) / (2 * h)
            assert abs(num - g[j]) <= 1e-6 * max(1.0, abs(num), abs(g[j]))


class TestAdaptiveMargin:
    def test_gap(self):
        assert adaptive_margin([2.0], [0.5], 0.8) == pytest.approx(1.5)

    def test_floor(self):
        assert adaptive_margin([0.5, 0.7], [0.9], 0.8) == 0.8

    def test_singletons(self):
        assert adaptive_margin([1.0], [0.1], 0.8) == pytest.approx(0.9)

    def test_empty(self):
        with pytest.raises(ValueError):
            adaptive_margin([], [0.1], 0.8)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 4), min_size=1, max_size=20), st.lists(st.floats(0, 4), min_size=1, max_size=20),
           st.floats(0.01, 2))
    def test_never_below_floor(self, an, ap, floor):
        assert adaptive_margin(an, ap, floor) >= floor


class TestMarginSpec:
    def test_fixed_defaults(self):
        assert MarginSpec().resolve([1.0], [3.0]) == (0.8, 0.4)

    def test_adaptive_uses_quadruple_gap(self):
        assert MarginSpec("adaptive").resolve([0.5], [2.0], [1.5]) == pytest.approx((1.5, 1.0))

    def test_adaptive_without_quadruples(self):
        assert MarginSpec("adaptive").resolve([0.5], [2.0]) == pytest.approx((1.5, 0.4))

    @pytest.mark.parametrize("kw", [{"mode": "other"}, {"alpha1": 0.0}, {"floor2": -1.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            MarginSpec(**kw)


class TestBatchLoss:
    @pytest.mark.parametrize("width", [3, 4])
    def test_matches_scalar_losses(self, width):
        rng = np.random.default_rng(width)
        Z = rng.normal(size=(8, 4)) * 0.5
        tuples = np.array([rng.choice(8, size=width, replace=False) for _ in range(12)])
        value, G = batch_loss(Z, tuples, 0.8, 0.4)
        expected_G = np.zeros_like(Z)
        vals = []
        for t in tuples:
            if width == 3:
                out = triplet_loss(*Z[t], 0.8)
            else:
                out = quadruplet_loss(*Z[t], 0.8, 0.4)
            vals.append(out.value)
            for idx, g in zip(t, out.grads):
                expected_G[idx] += g
        assert value == pytest.approx(np.mean(vals), abs=1e-12)
        np.testing.assert_allclose(G, expected_G / len(tuples), atol=1e-12)

    def test_empty_tuples(self):
        value, G = batch_loss(np.ones((3, 2)), np.zeros((0, 3), dtype=np.int64), 0.8)
        assert value == 0 and not G.any()

    def test_tuple_sq_dists(self):
        Z = np.array([[0.0, 0], [1, 0], [0, 2], [0, 3]])
        dap, dan, dqn = tuple_sq_dists(Z, np.array([[0, 1, 2, 3]]))
        assert (dap[0], dan[0], dqn[0]) == (1, 4, 1)
        assert tuple_sq_dists(Z, np.array([[0, 1, 2]]))[2] is None
