"""Independent reference computations used by the tests.

Nothing here imports the package's solvers or tree code.  Linear programs
go through scipy's HiGHS dual simplex; tree quantities are computed by
brute-force enumeration of descendants.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import cdist


def lp_transport(C, r, s):
    """Primal value and HiGHS duals of ``min <C, P>`` over couplings of r and s."""
    C = np.asarray(C, dtype=float)
    n, m = C.shape
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        A[n + j, j::m] = 1.0
    b = np.concatenate([r, s])
    res = linprog(C.ravel(), A_eq=A, b_eq=b, bounds=(0, None), method="highs-ds")
    assert res.status == 0, res.message
    duals = res.eqlin.marginals
    return res.fun, duals[:n], duals[n:]


def lp_limit_flow(D, g, p):
    """``max <g, lam>`` subject to ``lam_x - lam_y <= D_xy**p`` and ``lam_0 = 0``."""
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    rows, rhs = [], []
    for x, y in itertools.permutations(range(n), 2):
        a = np.zeros(n)
        a[x], a[y] = 1.0, -1.0
        rows.append(a)
        rhs.append(D[x, y] ** p)
    bounds = [(0, 0)] + [(None, None)] * (n - 1)
    res = linprog(-np.asarray(g, dtype=float), A_ub=np.array(rows), b_ub=rhs, bounds=bounds, method="highs-ds")
    assert res.status == 0, res.message
    return -res.fun


def lp_dual_face(C, r, s, g, h, alpha):
    """Maximum of ``sqrt(a)<g,lam> + sqrt(1-a)<h,mu>`` over the optimal dual face."""
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    value, _, _ = lp_transport(C, r, s)
    rows, rhs = [], []
    for x in range(n):
        for y in range(n):
            a = np.zeros(2 * n)
            a[x], a[n + y] = 1.0, 1.0
            rows.append(a)
            rhs.append(C[x, y])
    A_eq = np.concatenate([r, s])[None, :]
    c = -np.concatenate([np.sqrt(alpha) * np.asarray(g), np.sqrt(1 - alpha) * np.asarray(h)])
    bounds = [(0, 0)] + [(None, None)] * (2 * n - 1)
    res = linprog(c, A_ub=np.array(rows), b_ub=rhs, A_eq=A_eq, b_eq=[value], bounds=bounds, method="highs-ds")
    assert res.status == 0, res.message
    return -res.fun


def random_cloud(rng, n, dim=2):
    return rng.random((n, dim))


def euclidean(X):
    return cdist(X, X)


def random_prob(rng, n, zeros=0.0):
    w = rng.random(n)
    w[rng.random(n) < zeros] = 0.0
    if w.sum() == 0:
        w[0] = 1.0
    return w / w.sum()


def random_parent(rng, n):
    """Random recursive tree on 0..n-1 with root 0."""
    parent = np.full(n, -1)
    for x in range(1, n):
        parent[x] = rng.integers(0, x)
    return parent


def ancestors(parent, x):
    out = []
    while x >= 0:
        out.append(x)
        x = parent[x]
    return out


def brute_subtree_sums(parent, u):
    """``(S u)_x``: sum of u over every node whose ancestor chain contains x."""
    n = len(parent)
    out = np.zeros(n)
    for y in range(n):
        for x in ancestors(parent, y):
            out[x] += u[y]
    return out


def brute_tree_metric(parent, weight):
    """Path metric of a tree by walking both ancestor chains."""
    n = len(parent)
    depth_w = {}
    for x in range(n):
        depth_w[x] = sum(weight[a] for a in ancestors(parent, x) if parent[a] >= 0)
    D = np.zeros((n, n))
    for x in range(n):
        ax = ancestors(parent, x)
        for y in range(n):
            common = next(a for a in ancestors(parent, y) if a in ax)
            D[x, y] = depth_w[x] + depth_w[y] - 2 * depth_w[common]
    return D


def brute_tree_z(parent, weight, u, p):
    """``sum_x |(S u)_x| w_x**p`` over non-root nodes (returned to the power p)."""
    S = brute_subtree_sums(parent, u)
    nonroot = np.asarray(parent) >= 0
    return float(np.sum(np.abs(S[nonroot]) * np.asarray(weight)[nonroot] ** p))


def grid_points(D, L):
    """Cell-centre coordinates of the L**D grid in [0, 1]**D, row-major."""
    axes = [(np.arange(L) + 0.5) / L] * D
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def dyadic_formula(D, L, u, p):
    """The dyadic grid bound evaluated cell by cell from coordinates."""
    X = grid_points(D, L)
    l_max = int(round(np.log2(L)))
    total = 0.0
    for l in range(l_max + 1):
        cell = np.floor(X * 2**l).astype(int)
        keys = {}
        for k, c in enumerate(map(tuple, cell)):
            keys[c] = keys.get(c, 0.0) + u[k]
        coef = D ** (p / 2) * 2.0 ** (-p * (l + 1))
        total += coef * sum(abs(v) for v in keys.values())
    return total


def dyadic_tree_explicit(D, L):
    """Parent array and Euclidean edge lengths of the dyadic spanning tree.

    Leaves ``0 .. L**D - 1`` are the grid points; internal nodes are the
    cell centres of levels ``0 .. l_max - 1``.
    """
    X = grid_points(D, L)
    l_max = int(round(np.log2(L)))
    centres = {}
    nodes = [tuple(x) for x in X]
    index = {}
    for k in range(len(X)):
        index[(l_max, tuple(np.floor(X[k] * L).astype(int)))] = k
    for l in range(l_max):
        for c in itertools.product(range(2**l), repeat=D):
            index[(l, c)] = len(nodes)
            centres[(l, c)] = (np.array(c) + 0.5) / 2**l
            nodes.append(tuple(centres[(l, c)]))
    parent = np.full(len(nodes), -1)
    weight = np.zeros(len(nodes))
    for (l, c), k in index.items():
        if l == 0:
            continue
        pc = tuple(np.array(c) // 2)
        q = index[(l - 1, pc)]
        parent[k] = q
        weight[k] = np.linalg.norm(np.array(nodes[k]) - np.array(nodes[q]))
    return parent, weight


def multinomial_cov(r):
    r = np.asarray(r, dtype=float)
    return np.diag(r) - np.outer(r, r)


def mst_weight_exhaustive(D):
    """Minimum total weight over all labelled spanning trees (Pruefer codes)."""
    n = D.shape[0]
    best = np.inf
    for code in itertools.product(range(n), repeat=n - 2):
        degree = np.ones(n, dtype=int)
        for c in code:
            degree[c] += 1
        total = 0.0
        for c in code:
            leaf = int(np.flatnonzero(degree == 1)[0])
            total += D[leaf, c]
            degree[leaf] -= 1
            degree[c] -= 1
        u, v = np.flatnonzero(degree == 1)
        total += D[u, v]
        best = min(best, total)
    return best
