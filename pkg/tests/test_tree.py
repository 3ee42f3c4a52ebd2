import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otlimits import DyadicTree, GridSpace, MetricSpace, WeightedTree, grid_bound_statistic, limit_flow, spanning_tree, subtree_sums, tree_dual_witness, z_statistic
from otlimits.tree import grid_level_weights

from oracles import (
    brute_subtree_sums,
    brute_tree_metric,
    brute_tree_z,
    dyadic_formula,
    dyadic_tree_explicit,
    euclidean,
    lp_limit_flow,
    mst_weight_exhaustive,
    random_cloud,
    random_parent,
)


def _random_tree(seed, n):
    rng = np.random.default_rng(seed)
    parent = random_parent(rng, n)
    weight = rng.uniform(0.1, 2.0, n)
    weight[0] = 0.0
    return parent, weight, rng


class TestWeightedTree:
    def test_root_conventions(self):
        a = WeightedTree([0, 0, 1], [0, 1, 1])
        b = WeightedTree([-1, 0, 1], [0, 1, 1])
        np.testing.assert_array_equal(a.parent, b.parent)

    def test_cycle_rejected(self):
        with pytest.raises(ValueError):
            WeightedTree([0, 2, 1], [0, 1, 1])

    def test_two_roots_rejected(self):
        with pytest.raises(ValueError):
            WeightedTree([0, 1], [0, 0])

    def test_distance_matrix(self):
        parent, weight, _ = _random_tree(0, 25)
        T = WeightedTree(parent, weight)
        np.testing.assert_allclose(T.distance_matrix(), brute_tree_metric(parent, weight), atol=1e-12)


class TestSubtreeSums:
    def test_root_unit(self):
        T = WeightedTree([-1, 0, 0], [0, 1, 1])
        np.testing.assert_array_equal(subtree_sums(T, [1.0, 0, 0]), [1.0, 0, 0])

    def test_chain(self):
        T = WeightedTree([-1, 0, 1], [0, 1, 1])
        np.testing.assert_array_equal(subtree_sums(T, [1.0, 2.0, 3.0]), [6.0, 5.0, 3.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force(self, seed):
        parent, weight, rng = _random_tree(seed, 30)
        u = rng.normal(size=30)
        T = WeightedTree(parent, weight)
        np.testing.assert_allclose(subtree_sums(T, u), brute_subtree_sums(parent, u), atol=1e-12)

    def test_batch(self):
        parent, weight, rng = _random_tree(1, 12)
        U = rng.normal(size=(4, 12))
        T = WeightedTree(parent, weight)
        np.testing.assert_allclose(subtree_sums(T, U), [subtree_sums(T, u) for u in U])

    def test_balanced_root_zero(self):
        parent, weight, rng = _random_tree(2, 20)
        u = rng.normal(size=20)
        u -= u.mean()
        assert subtree_sums(WeightedTree(parent, weight), u)[0] == pytest.approx(0.0, abs=1e-12)


class TestZStatistic:
    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_single_edge(self, p):
        T = WeightedTree([-1, 0], [0, 0.7])
        assert z_statistic(T, [-1.5, 1.5], p) == pytest.approx((1.5 * 0.7**p) ** (1 / p), rel=1e-14)

    def test_zero(self):
        assert z_statistic(WeightedTree([-1, 0, 0], [0, 1, 2]), np.zeros(3), 2) == 0.0

    def test_forty_nodes_frozen(self):
        rng = np.random.default_rng(40)
        parent = random_parent(rng, 40)
        w = rng.uniform(0.1, 2, 40)
        w[0] = 0
        u = rng.normal(size=40)
        u -= u.mean()
        T = WeightedTree(parent, w)
        assert z_statistic(T, u, 1) == pytest.approx(29.325734595635556, rel=1e-12)
        assert z_statistic(T, u, 2) ** 2 == pytest.approx(27.570992007136386, rel=1e-12)

    @pytest.mark.parametrize("p", [1, 2])
    @pytest.mark.parametrize("seed", range(5))
    def test_equals_limit_flow(self, seed, p):
        parent, weight, rng = _random_tree(10 + seed, 25)
        u = rng.normal(size=25)
        u -= u.mean()
        T = WeightedTree(parent, weight)
        z = z_statistic(T, u, p) ** p
        assert z == pytest.approx(brute_tree_z(parent, weight, u, p), rel=1e-12)
        assert z == pytest.approx(lp_limit_flow(brute_tree_metric(parent, weight), u, p), abs=1e-9)
        assert z == pytest.approx(limit_flow(T.as_space(), u, p), abs=1e-9)


class TestDualWitness:
    def test_zero_input(self):
        T = WeightedTree([-1, 0, 0], [0, 1, 1])
        dual = tree_dual_witness(T, np.zeros(3), 1)
        assert np.all(np.isfinite(dual.lam))
        assert np.zeros(3) @ dual.lam == 0.0

    def test_single_edge(self):
        T = WeightedTree([-1, 0], [0, 1.0])
        dual = tree_dual_witness(T, [2.0, -2.0], 1)
        assert dual.lam[1] == pytest.approx(-1.0)
        assert np.array([2.0, -2.0]) @ dual.lam == pytest.approx(2.0)

    @pytest.mark.parametrize("p", [1, 2, 0.5])
    @pytest.mark.parametrize("seed", range(4))
    def test_feasible_and_tight(self, seed, p):
        parent, weight, rng = _random_tree(20 + seed, 30)
        u = rng.normal(size=30)
        u -= u.mean()
        T = WeightedTree(parent, weight)
        lam = tree_dual_witness(T, u, p).lam
        Dp = brute_tree_metric(parent, weight) ** p
        if p >= 1:
            assert np.min(Dp - (lam[:, None] - lam[None, :])) >= -1e-12
        assert u @ lam == pytest.approx(z_statistic(T, u, p) ** p, rel=1e-12)


class TestSpanningTree:
    def test_star(self):
        rng = np.random.default_rng(0)
        X = random_cloud(rng, 6)
        sp = MetricSpace(coords=X, base_point=2)
        T = spanning_tree(sp, "star")
        D = euclidean(X)
        np.testing.assert_allclose(T.distance_matrix()[0, 1], D[0, 2] + D[2, 1], atol=1e-12)
        assert T.root == 2

    def test_mst_is_minimal(self):
        rng = np.random.default_rng(1)
        X = random_cloud(rng, 6)
        T = spanning_tree(MetricSpace(coords=X), "mst")
        assert T.weight.sum() == pytest.approx(mst_weight_exhaustive(euclidean(X)), rel=1e-12)

    def test_two_points(self):
        T = spanning_tree(MetricSpace(coords=[0.0, 2.5]), "mst")
        np.testing.assert_allclose(T.distance_matrix(), [[0, 2.5], [2.5, 0]])

    def test_dominates_metric(self):
        rng = np.random.default_rng(2)
        X = random_cloud(rng, 20)
        for strategy in ("mst", "star"):
            DT = spanning_tree(MetricSpace(coords=X), strategy).distance_matrix()
            assert np.all(DT >= euclidean(X) - 1e-12)


class TestGridBound:
    def test_zero(self):
        assert grid_bound_statistic(GridSpace(2, 4), np.zeros(16), 1) == 0.0

    def test_level_coefficients(self):
        w = grid_level_weights(2, 3, 1)
        assert w[0] == pytest.approx(np.sqrt(2) / 2)
        assert w[1] == pytest.approx(np.sqrt(2) / 4)
        for D, p in itertools.product((1, 2, 3), (1, 2, 0.5)):
            np.testing.assert_allclose(grid_level_weights(D, 4, p), D ** (p / 2) * 2.0 ** (-p * (np.arange(5) + 1)))

    def test_hand_example(self):
        u = np.array([1.0, -1.0, 0.0, 0.0])
        assert grid_bound_statistic(GridSpace(1, 4), u, 1) == pytest.approx(0.25, rel=1e-14)
        assert dyadic_formula(1, 4, u, 1) == pytest.approx(0.25, rel=1e-14)

    @pytest.mark.parametrize("D,L", [(1, 2), (1, 8), (2, 2), (2, 4), (2, 8), (3, 4)])
    @pytest.mark.parametrize("p", [1, 2])
    def test_matches_explicit_tree(self, D, L, p):
        rng = np.random.default_rng(D * 100 + L)
        grid = GridSpace(D, L)
        parent, weight = dyadic_tree_explicit(D, L)
        T = WeightedTree(parent, weight)
        for _ in range(5):
            u = rng.normal(size=L**D)
            u -= u.mean()
            expect = brute_tree_z(parent, weight, np.concatenate([u, np.zeros(len(parent) - u.size)]), p)
            assert grid_bound_statistic(grid, u, p) ** p == pytest.approx(expect, rel=1e-10)
            assert grid_bound_statistic(grid, u, p) ** p == pytest.approx(dyadic_formula(D, L, u, p), rel=1e-10)
            Tu = np.concatenate([u, np.zeros(len(parent) - u.size)])
            assert z_statistic(T, Tu, p) ** p == pytest.approx(expect, rel=1e-10)

    def test_root_term_for_unbalanced_input(self):
        u = np.array([1.0, 0.0, 0.0, 0.0])
        expect = dyadic_formula(1, 4, u, 1)
        assert grid_bound_statistic(GridSpace(1, 4), u, 1) == pytest.approx(expect, rel=1e-14)

    def test_dyadic_tree_class(self):
        grid = GridSpace(2, 8)
        dt = DyadicTree(grid)
        rng = np.random.default_rng(5)
        u = rng.normal(size=64)
        u -= u.mean()
        assert z_statistic(dt.tree, dt.embed(u), 2) == pytest.approx(grid_bound_statistic(grid, u, 2), rel=1e-12)

    def test_batch(self):
        grid = GridSpace(2, 4)
        U = np.random.default_rng(6).normal(size=(3, 16))
        np.testing.assert_allclose(grid_bound_statistic(grid, U, 1), [grid_bound_statistic(grid, u, 1) for u in U])

    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from([(1, 4), (1, 16), (2, 4)]), st.integers(0, 2**32 - 1))
    def test_property_formula(self, shape, seed):
        D, L = shape
        u = np.random.default_rng(seed).normal(size=L**D)
        assert grid_bound_statistic(GridSpace(D, L), u, 1) == pytest.approx(dyadic_formula(D, L, u, 1), rel=1e-10)
