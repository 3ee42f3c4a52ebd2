import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otlimits import GridSpace, Measure, MetricSpace, ThresholdedMetric, dual_face_max, dual_is_unique, limit_flow, wasserstein
from otlimits.measures import gaussian_draws
from otlimits.solver import DualFaceNetwork, FlowProblem, InfeasibleFlowError

from oracles import euclidean, lp_dual_face, lp_limit_flow, lp_transport, random_cloud, random_prob


def _instance(seed, n, zeros=0.0):
    rng = np.random.default_rng(seed)
    X = random_cloud(rng, n)
    return X, random_prob(rng, n, zeros), random_prob(rng, n, zeros)


class TestWasserstein:
    def test_identical_measures(self):
        X, r, _ = _instance(0, 6)
        res = wasserstein(MetricSpace(coords=X), r, r, 2)
        assert res.value == 0.0
        rows, cols = res.plan.support()
        np.testing.assert_array_equal(rows, cols)

    def test_two_points(self):
        res = wasserstein(MetricSpace(coords=[0.0, 3.0]), [1.0, 0.0], [0.0, 1.0], 1)
        assert res.value == pytest.approx(3.0, abs=1e-14)

    def test_four_point_frozen(self):
        X = np.array(
            [
                [0.6758313379812818, 0.21432320123825765],
                [0.3094520308816917, 0.7994660967748332],
                [0.9958020988654668, 0.1422318152800518],
                [0.07872553376199898, 0.18082381369685463],
            ]
        )
        r = np.array([0.20730923250312397, 0.09777266893466416, 0.33937521678633786, 0.355542881775874])
        s = np.array([0.3617136296786554, 0.2963894864666948, 0.22127293234890785, 0.12062395150574198])
        res = wasserstein(MetricSpace(coords=X), r, s, 2)
        # value from the HiGHS dual-simplex oracle on the 16-variable LP
        assert res.cost == pytest.approx(0.11227658173968917, abs=1e-12)

    @pytest.mark.parametrize("p", [1, 2, 1.5])
    @pytest.mark.parametrize("seed", range(8))
    def test_matches_lp(self, seed, p):
        X, r, s = _instance(seed, 10, zeros=0.3)
        C = euclidean(X) ** p
        oracle, _, _ = lp_transport(C, r, s)
        res = wasserstein(MetricSpace(coords=X), r, s, p)
        assert res.cost == pytest.approx(oracle, abs=1e-10)
        lam, mu = res.dual.lam, res.dual.mu
        assert np.max(lam[:, None] + mu[None, :] - C) <= 1e-10
        assert r @ lam + s @ mu == pytest.approx(res.cost, abs=1e-10)
        P = res.plan.dense()
        np.testing.assert_allclose(P.sum(axis=1), r, atol=1e-12)
        np.testing.assert_allclose(P.sum(axis=0), s, atol=1e-12)
        assert np.sum(P * C) == pytest.approx(res.cost, abs=1e-12)

    def test_small_exponent_accepted(self):
        X, r, s = _instance(12, 8)
        oracle, _, _ = lp_transport(euclidean(X) ** 0.5, r, s)
        assert wasserstein(MetricSpace(coords=X), r, s, 0.5).cost == pytest.approx(oracle, abs=1e-10)

    def test_dual_pinned_at_base(self):
        X, r, s = _instance(3, 7)
        res = wasserstein(MetricSpace(coords=X, base_point=2), r, s, 1)
        assert res.dual.lam[2] == 0.0

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            wasserstein(MetricSpace(coords=[0.0, 1.0]), [1.0], [0.5, 0.5])

    def test_symmetry_and_triangle(self):
        rng = np.random.default_rng(9)
        sp = MetricSpace(coords=random_cloud(rng, 9))
        a, b, c = (random_prob(rng, 9) for _ in range(3))
        ab = wasserstein(sp, a, b, 2).value
        assert wasserstein(sp, b, a, 2).value == pytest.approx(ab, abs=1e-12)
        assert ab <= wasserstein(sp, a, c, 2).value + wasserstein(sp, c, b, 2).value + 1e-12

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 9), st.integers(0, 2**32 - 1), st.sampled_from([1.0, 2.0]))
    def test_property_lp(self, n, seed, p):
        X, r, s = _instance(seed, n, zeros=0.2)
        oracle, _, _ = lp_transport(euclidean(X) ** p, r, s)
        assert wasserstein(MetricSpace(coords=X), r, s, p).cost == pytest.approx(oracle, abs=1e-10)


class TestThresholded:
    def test_inactive_threshold(self):
        X, r, s = _instance(4, 12)
        sp = MetricSpace(coords=X)
        full = wasserstein(sp, r, s, 1).value
        assert wasserstein(ThresholdedMetric(sp, sp.diameter() * 1.01), r, s, 1).value == pytest.approx(full, abs=1e-12)

    def test_thirty_points_frozen(self):
        rng = np.random.default_rng(7)
        X = random_cloud(rng, 30)
        r, s = random_prob(rng, 30), random_prob(rng, 30)
        D = euclidean(X)
        t = float(np.median(D[np.triu_indices(30, 1)]))
        res = wasserstein(ThresholdedMetric(MetricSpace(coords=X), t), r, s, 1)
        assert res.cost == pytest.approx(0.08125952104788106, abs=1e-12)

    def test_disjoint_far_supports(self):
        sp = MetricSpace(coords=[0.0, 0.1, 5.0, 5.1])
        res = wasserstein(ThresholdedMetric(sp, 1.0), [0.5, 0.5, 0, 0], [0, 0, 0.5, 0.5], 1)
        assert res.value == pytest.approx(1.0, abs=1e-14)
        P = res.plan.dense()
        assert P[:2, 2:].sum() == pytest.approx(1.0)

    @pytest.mark.parametrize("p", [1, 2])
    @pytest.mark.parametrize("seed", range(6))
    def test_matches_dense(self, seed, p):
        X, r, s = _instance(100 + seed, 20, zeros=0.25)
        D = euclidean(X)
        t = float(np.quantile(D[np.triu_indices(20, 1)], 0.3))
        tm = ThresholdedMetric(MetricSpace(coords=X), t)
        oracle, _, _ = lp_transport(np.minimum(D, t) ** p, r, s)
        res = wasserstein(tm, r, s, p)
        assert res.cost == pytest.approx(oracle, abs=1e-10)
        P = res.plan.dense()
        np.testing.assert_allclose(P.sum(axis=1), r, atol=1e-12)
        assert np.sum(P * np.minimum(D, t) ** p) == pytest.approx(res.cost, abs=1e-12)

    def test_monotone_in_t(self):
        X, r, s = _instance(5, 25)
        sp = MetricSpace(coords=X)
        vals = [wasserstein(ThresholdedMetric(sp, t), r, s, 1).value for t in (0.05, 0.1, 0.2, 0.4, 2.0)]
        assert np.all(np.diff(vals) >= -1e-12)

    def test_grid_4096_fast(self):
        import time

        rng = np.random.default_rng(0)
        g = GridSpace(2, 64)
        r, s = random_prob(rng, 4096), random_prob(rng, 4096)
        t0 = time.perf_counter()
        res = wasserstein(ThresholdedMetric(g, 1.5 / 64), r, s, 1)
        assert time.perf_counter() - t0 < 10.0
        assert 0 < res.value <= 1.5 / 64


class TestLimitFlow:
    def test_zero(self):
        assert limit_flow(MetricSpace(coords=[0.0, 1.0, 2.0]), np.zeros(3), 1) == 0.0

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_single_arc(self, p):
        a, delta = 0.7, 1.3
        v = limit_flow(MetricSpace(coords=[0.0, delta]), [a, -a], p)
        assert v == pytest.approx(a * delta**p, rel=1e-14)

    def test_ten_points_frozen(self):
        rng = np.random.default_rng(11)
        X = random_cloud(rng, 10)
        g = rng.normal(size=10)
        g -= g.mean()
        sp = MetricSpace(coords=X)
        assert limit_flow(sp, g, 1) == pytest.approx(1.0510360129863792, abs=1e-12)
        assert limit_flow(sp, g, 2) == pytest.approx(0.34223263122801506, abs=1e-12)

    @pytest.mark.parametrize("p", [1, 2])
    @pytest.mark.parametrize("seed", range(6))
    def test_matches_lp(self, seed, p):
        rng = np.random.default_rng(seed)
        X = random_cloud(rng, 12)
        r = random_prob(rng, 12)
        g = gaussian_draws(r, seed, [0])[0]
        assert limit_flow(MetricSpace(coords=X), g, p) == pytest.approx(lp_limit_flow(euclidean(X), g, p), abs=1e-10)

    @pytest.mark.parametrize("seed", range(4))
    def test_thresholded_matches_dense(self, seed):
        rng = np.random.default_rng(seed)
        X = random_cloud(rng, 15)
        g = gaussian_draws(random_prob(rng, 15), seed, [0])[0]
        D = euclidean(X)
        t = float(np.median(D))
        tm = ThresholdedMetric(MetricSpace(coords=X), t)
        assert limit_flow(tm, g, 1) == pytest.approx(lp_limit_flow(np.minimum(D, t), g, 1), abs=1e-10)

    def test_equals_jordan_transport_for_p1(self):
        rng = np.random.default_rng(2)
        X = random_cloud(rng, 9)
        sp = MetricSpace(coords=X)
        g = gaussian_draws(random_prob(rng, 9), 3, [0])[0]
        plus, minus = np.maximum(g, 0), np.maximum(-g, 0)
        mass = plus.sum()
        w = wasserstein(sp, plus / mass, minus / mass, 1).cost * mass
        assert limit_flow(sp, g, 1) == pytest.approx(w, abs=1e-12)

    def test_below_jordan_transport_for_p2(self):
        sp = MetricSpace(coords=[0.0, 1.0, 2.0])
        g = np.array([1.0, 0.0, -1.0])
        assert limit_flow(sp, g, 2) == pytest.approx(2.0)
        assert wasserstein(sp, [1, 0, 0], [0, 0, 1], 2).cost == pytest.approx(4.0)


class TestDualFace:
    def test_zero_draws(self):
        X, r, s = _instance(1, 5)
        assert dual_face_max(MetricSpace(coords=X), r, s, 1, np.zeros(5), np.zeros(5), 0.5) == pytest.approx(0.0, abs=1e-14)

    def test_unique_face_is_linear(self):
        X, r, s = _instance(2, 5)
        sp = MetricSpace(coords=X)
        res = wasserstein(sp, r, s, 2)
        assert dual_is_unique(res, r, s)
        G, H = gaussian_draws(r, 0, range(5), second=s)
        for g, h in zip(G, H):
            expect = np.sqrt(0.3) * g @ res.dual.lam + np.sqrt(0.7) * h @ res.dual.mu
            assert dual_face_max(sp, r, s, 2, g, h, 0.3, result=res) == pytest.approx(expect, abs=1e-10)

    def test_non_unique_frozen(self):
        X = np.arange(5.0)[:, None]
        r = np.array([0.5, 0, 0.5, 0, 0])
        s = np.array([0, 0.5, 0, 0.5, 0])
        rng = np.random.default_rng(3)
        g = rng.normal(size=5) * np.sqrt(r)
        g -= r * g.sum()
        h = rng.normal(size=5) * np.sqrt(s)
        h -= s * h.sum()
        sp = MetricSpace(coords=X)
        assert not dual_is_unique(wasserstein(sp, r, s, 1), r, s)
        assert dual_face_max(sp, r, s, 1, g, None, 1.0) == pytest.approx(1.1475072208586798, abs=1e-10)
        assert dual_face_max(sp, r, s, 1, g, h, 0.5) == pytest.approx(1.3887966637658566, abs=1e-10)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_face_lp(self, seed):
        X, r, s = _instance(50 + seed, 6, zeros=0.3)
        sp = MetricSpace(coords=X)
        net = DualFaceNetwork(sp, r, s, 1)
        G, H = gaussian_draws(r, seed, range(3), second=s)
        for g, h in zip(G, H):
            for a in (1.0, 0.5):
                hh = None if a == 1.0 else h
                assert net.value(g, hh, a) == pytest.approx(lp_dual_face(euclidean(X), r, s, g, h, a), abs=1e-7)


class TestFlowProblem:
    def test_unbalanced_supply(self):
        prob = FlowProblem(2, [0], [1], [1.0])
        with pytest.raises(ValueError):
            prob.solve([1.0, -0.5])

    def test_infeasible(self):
        prob = FlowProblem(3, [0], [1], [1.0])
        with pytest.raises(InfeasibleFlowError):
            prob.solve([1.0, 0.0, -1.0])

    def test_dimacs_text(self):
        prob = FlowProblem(2, [0], [1], [2.5])
        text = prob.to_dimacs([1.0, -1.0])
        assert "p min 2 1" in text
        assert "a 1 2 0" in text
