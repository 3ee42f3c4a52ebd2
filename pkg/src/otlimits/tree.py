"""Rooted weighted trees and the closed-form limit statistic on them.

For a tree with subtree-sum operator ``S`` and edge weights
``w(x) = d_T(x, parent(x))`` the limit statistic is

    Z_{T,p}(u) = ( sum_x |(S u)_x| w(x)**p )**(1/p).

Every function here accepts a single vector ``u`` of shape ``(N,)`` or a
stack of vectors of shape ``(M, N)``.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, minimum_spanning_tree, shortest_path

from .solver import DualPair
from .space import GridSpace, MetricSpace

__all__ = [
    "WeightedTree",
    "DyadicTree",
    "subtree_sums",
    "z_statistic",
    "tree_dual_witness",
    "spanning_tree",
    "grid_level_weights",
    "grid_bound_statistic",
]


class WeightedTree:
    """A rooted tree given by parent links.

    Parameters
    ----------
    parent : array of int
        ``parent[root] == root`` (or a negative value); every other node
        points to its parent.
    weight : array of float
        ``weight[x] = d_T(x, parent(x)) >= 0``; the root entry is ignored
        and stored as 0.

    Raises
    ------
    ValueError
        No root, several roots, a cycle, or a negative weight.
    """

    def __init__(self, parent, weight):
        parent = np.array(parent, dtype=np.int64)
        weight = np.array(weight, dtype=float)
        n = parent.size
        neg = parent < 0
        parent[neg] = np.flatnonzero(neg)
        if n == 0 or weight.shape != parent.shape:
            raise ValueError("parent and weight must be nonempty and of equal length")
        if parent.min() < 0 or parent.max() >= n:
            raise ValueError("parent index out of range")
        roots = np.flatnonzero(parent == np.arange(n))
        if roots.size != 1:
            raise ValueError("a tree needs exactly one root, found %d" % roots.size)
        root = int(roots[0])
        weight[root] = 0.0
        if np.any(weight < 0) or not np.all(np.isfinite(weight)):
            raise ValueError("edge weights must be finite and nonnegative")
        # breadth-first order from the root; nodes never reached lie on cycles
        children = coo_matrix(
            (np.ones(n - 1), (parent[parent != np.arange(n)], np.flatnonzero(parent != np.arange(n)))),
            shape=(n, n),
        ).tocsr()
        order = breadth_first_order(children, root, directed=True, return_predecessors=False)
        if order.size != n:
            raise ValueError("parent links contain a cycle")
        depth = np.zeros(n, dtype=np.int64)
        for x in order[1:]:
            depth[x] = depth[parent[x]] + 1
        self.parent = parent
        self.weight = weight
        self.root = root
        self.order = order
        self.depth = depth
        self.parent.flags.writeable = False
        self.weight.flags.writeable = False
        # nodes grouped by depth, deepest last
        by_depth = np.argsort(depth, kind="stable")
        bounds = np.searchsorted(depth[by_depth], np.arange(depth.max() + 2))
        self._levels = [by_depth[bounds[d] : bounds[d + 1]] for d in range(depth.max() + 1)]

    def __len__(self) -> int:
        return self.parent.size

    def __repr__(self) -> str:
        return "WeightedTree(N=%d, root=%d, height=%d)" % (len(self), self.root, len(self._levels) - 1)

    @property
    def n_nodes(self) -> int:
        return self.parent.size

    def edges(self):
        """``(child, parent, weight)`` for every non-root node."""
        x = np.flatnonzero(np.arange(self.n_nodes) != self.root)
        return x, self.parent[x], self.weight[x]

    def distance_matrix(self) -> np.ndarray:
        """All-pairs path lengths ``d_T``."""
        x, px, w = self.edges()
        # zero-weight edges would vanish from a sparse graph; shift and correct
        eps = 1.0
        g = coo_matrix((w + eps, (x, px)), shape=(self.n_nodes,) * 2).tocsr()
        hops = coo_matrix((np.ones(x.size), (x, px)), shape=(self.n_nodes,) * 2).tocsr()
        d = shortest_path(g, directed=False)
        h = shortest_path(hops, directed=False, unweighted=True)
        return d - eps * h

    def as_space(self, ids=None, base_point: int | None = None) -> MetricSpace:
        """The tree metric as an explicit-matrix space (needs positive weights)."""
        return MetricSpace(
            matrix=self.distance_matrix(),
            ids=ids,
            base_point=self.root if base_point is None else base_point,
        )

    def to_rows(self):
        """Rows ``(node, parent, weight)`` in node order."""
        return [(int(x), int(self.parent[x]), float(self.weight[x])) for x in range(self.n_nodes)]


class DyadicTree:
    """The hierarchical tree over the dyadic partitions of a grid.

    Node numbering: the ``L**D`` grid points come first (the leaves, same
    indices as in the grid); internal nodes of level ``l_max - 1`` down to
    0 follow, each level in C order of cell multi-indices.  The root is the
    single level-0 cell.  The edge from a level-``l`` node to its parent
    has weight ``sqrt(D) * 2**-l / 2``.
    """

    def __init__(self, grid: GridSpace):
        self.grid = grid
        D, lm = grid.D, grid.l_max
        offsets = {}
        start = grid.n_points
        offsets[lm] = 0
        for l in range(lm - 1, -1, -1):
            offsets[l] = start
            start += 1 << (D * l)
        n = start
        parent = np.empty(n, dtype=np.int64)
        weight = np.zeros(n)
        for l in range(lm, -1, -1):
            side = 1 << l
            cells = np.arange(side**D)
            nodes = offsets[l] + cells
            if l == 0:
                parent[nodes] = nodes
                continue
            multi = np.unravel_index(cells, (side,) * D)
            up = np.ravel_multi_index(tuple(m >> 1 for m in multi), (side >> 1,) * D)
            parent[nodes] = offsets[l - 1] + up
            weight[nodes] = np.sqrt(D) * 2.0 ** (-l) / 2.0
        self.offsets = offsets
        self.tree = WeightedTree(parent, weight)

    def embed(self, u) -> np.ndarray:
        """Extend a vector on grid points by zeros on internal nodes."""
        u = np.asarray(u, dtype=float)
        pad = np.zeros(u.shape[:-1] + (self.tree.n_nodes - self.grid.n_points,))
        return np.concatenate([u, pad], axis=-1)


def subtree_sums(tree: WeightedTree, u) -> np.ndarray:
    """``(S_T u)_x``, the sum of ``u`` over the subtree rooted at ``x``."""
    S = np.array(u, dtype=float)
    if S.shape[-1] != tree.n_nodes:
        raise ValueError("u has %d entries, tree has %d nodes" % (S.shape[-1], tree.n_nodes))
    for nodes in reversed(tree._levels[1:]):
        if S.ndim == 1:
            np.add.at(S, tree.parent[nodes], S[nodes])
        else:
            # transpose so that np.add.at scatters whole rows
            St = S.T
            np.add.at(St, tree.parent[nodes], St[nodes])
    return S


def z_statistic(tree: WeightedTree, u, p: float = 1.0):
    """``Z_{T,p}(u)``; returns a float for one vector, an array for a stack."""
    if not p > 0:
        raise ValueError("p must be positive")
    S = subtree_sums(tree, u)
    total = np.abs(S) @ (tree.weight**p)
    out = total ** (1.0 / p)
    return float(out) if np.ndim(out) == 0 else out


def tree_dual_witness(tree: WeightedTree, u, p: float = 1.0) -> DualPair:
    """Potential attaining ``<u, lam> = Z_{T,p}(u)**p``.

    ``lam[root] = 0`` and ``lam[x] - lam[parent(x)] = sign((S u)_x) w(x)**p``
    with ``sign(0) = +1``.  Along any path ``|lam[x] - lam[y]|`` is at most
    the sum of ``w**p`` over its edges, which is at most ``d_T(x, y)**p``
    for ``p >= 1``, so ``lam`` is feasible for every pair.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise ValueError("tree_dual_witness takes a single vector")
    S = subtree_sums(tree, u)
    step = np.where(S >= 0, 1.0, -1.0) * tree.weight**p
    lam = np.zeros(tree.n_nodes)
    for nodes in tree._levels[1:]:
        lam[nodes] = lam[tree.parent[nodes]] + step[nodes]
    return DualPair(lam, None, optimal=True)


def spanning_tree(space: MetricSpace, strategy="mst") -> WeightedTree:
    """Spanning tree of a finite space with ground distances as weights.

    Parameters
    ----------
    space : MetricSpace
    strategy : {"mst", "star"} or array of int
        ``"star"`` hangs every point off the base point, ``"mst"`` takes a
        minimum spanning tree rooted at the base point, and an integer
        array is used as an explicit parent vector.
    """
    n = len(space)
    x0 = space.base_point_index
    if isinstance(strategy, str):
        if strategy == "star":
            parent = np.full(n, x0, dtype=np.int64)
        elif strategy == "mst":
            if n == 1:
                parent = np.zeros(1, dtype=np.int64)
            else:
                D = space.distance_matrix()
                T = minimum_spanning_tree(D)
                _, pred = breadth_first_order(T, x0, directed=False, return_predecessors=True)
                parent = pred.astype(np.int64)
                parent[x0] = x0
        else:
            raise ValueError("unknown spanning tree strategy %r" % strategy)
    else:
        parent = np.asarray(strategy, dtype=np.int64)
        if parent.shape != (n,):
            raise ValueError("parent vector has the wrong length")
    idx = np.arange(n)
    weight = np.where(parent == idx, 0.0, space.dist(idx, parent))
    return WeightedTree(parent, weight)


def grid_level_weights(D: int, l_max: int, p: float = 1.0) -> np.ndarray:
    """Coefficients ``D**(p/2) * 2**(-p (l+1))`` for ``l = 0 .. l_max``."""
    l = np.arange(l_max + 1)
    return D ** (p / 2.0) * 2.0 ** (-p * (l + 1))


def grid_bound_statistic(grid: GridSpace, u, p: float = 1.0):
    """Dyadic-tree statistic on a grid by hierarchical cell aggregation.

    Evaluates ``(sum_l c_l sum_{F in P_l} |sum_{x in F} u_x|)**(1/p)`` with
    ``c_l`` from :func:`grid_level_weights`, in ``O(N l_max)``.  The
    ``l = 0`` term is ``c_0 |sum u|``; it vanishes for balanced ``u`` and
    then the value equals :func:`z_statistic` on :class:`DyadicTree`.
    """
    if not isinstance(grid, GridSpace):
        raise TypeError("grid_bound_statistic needs a GridSpace")
    L, D, lm = grid.L, grid.D, grid.l_max
    if L & (L - 1):
        raise ValueError("L must be a power of two")
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != grid.n_points:
        raise ValueError("u has %d entries, grid has %d points" % (u.shape[-1], grid.n_points))
    lead = u.shape[:-1]
    S = u.reshape((-1,) + (L,) * D)
    coef = grid_level_weights(D, lm, p)
    total = np.zeros(S.shape[0])
    for l in range(lm, -1, -1):
        total += coef[l] * np.abs(S).reshape(S.shape[0], -1).sum(axis=1)
        if l > 0:
            half = S.shape[1] // 2
            shape = (S.shape[0],) + (half, 2) * D
            S = S.reshape(shape).sum(axis=tuple(range(2, 2 * D + 1, 2)))
    out = (total ** (1.0 / p)).reshape(lead)
    return float(out) if out.ndim == 0 else out
