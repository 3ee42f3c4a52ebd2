"""Finite metric spaces, thresholded metrics and regular grids.

Distances come either from an explicit symmetric matrix or from point
coordinates (Euclidean).  Large coordinate spaces never build a dense
matrix; neighbourhood queries go through a k-d tree instead.
"""

from __future__ import annotations

from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

__all__ = [
    "MetricSpace",
    "ThresholdedMetric",
    "GridSpace",
    "build_space",
    "threshold_metric",
    "summability_partial_sums",
    "bin_cdf",
]

# Spaces larger than this refuse to materialise a dense distance matrix.
DENSE_LIMIT = 20000


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class MetricSpace:
    """A finite metric space.

    Parameters
    ----------
    coords : ndarray of shape (N, D), optional
        Point coordinates; distances are Euclidean.
    matrix : ndarray of shape (N, N), optional
        Explicit distance matrix.  Exactly one of ``coords`` and ``matrix``
        must be given.
    ids : sequence of str, optional
        Point labels.  Defaults to ``"0" .. "N-1"``.
    base_point : int
        Index of the base point x0.

    Notes
    -----
    Instances are immutable; use :func:`build_space` to get the validation
    of symmetry and positivity.
    """

    def __init__(self, coords=None, matrix=None, ids=None, base_point: int = 0):
        if (coords is None) == (matrix is None):
            raise ValueError("give exactly one of coords and matrix")
        if coords is not None:
            coords = np.asarray(coords, dtype=float)
            if coords.ndim == 1:
                coords = coords[:, None]
            self._coords = _readonly(np.ascontiguousarray(coords))
            self._matrix = None
            n = coords.shape[0]
        else:
            matrix = np.asarray(matrix, dtype=float)
            self._matrix = _readonly(np.ascontiguousarray(matrix))
            self._coords = None
            n = matrix.shape[0]
        if n < 1:
            raise ValueError("a metric space needs at least one point")
        self._n = n
        if ids is not None:
            ids = tuple(str(i) for i in ids)
            if len(ids) != n:
                raise ValueError("ids length %d does not match %d points" % (len(ids), n))
            if len(set(ids)) != n:
                raise ValueError("point ids must be unique")
        self._ids = ids
        if not 0 <= base_point < n:
            raise ValueError("base point index %d out of range" % base_point)
        self.base_point_index = int(base_point)

    def __len__(self) -> int:
        return self._n

    def __repr__(self) -> str:
        kind = "coords" if self._coords is not None else "matrix"
        return "%s(N=%d, %s, x0=%d)" % (type(self).__name__, self._n, kind, self.base_point_index)

    @property
    def n_points(self) -> int:
        return self._n

    @property
    def coords(self) -> np.ndarray | None:
        return self._coords

    @property
    def matrix(self) -> np.ndarray | None:
        return self._matrix

    @property
    def ids(self) -> tuple[str, ...]:
        if self._ids is None:
            return tuple(str(i) for i in range(self._n))
        return self._ids

    @cached_property
    def _id_index(self) -> dict[str, int]:
        return {k: i for i, k in enumerate(self.ids)}

    def index_of(self, labels) -> np.ndarray:
        """Map point ids to indices; raises ``KeyError`` on unknown ids."""
        table = self._id_index
        out = np.empty(len(labels), dtype=np.int64)
        for k, lab in enumerate(labels):
            try:
                out[k] = table[str(lab)]
            except KeyError:
                raise KeyError("unknown point id %r" % (lab,)) from None
        return out

    def dist(self, i, j):
        """Distance between points (vectorised over index arrays)."""
        if self._matrix is not None:
            return self._matrix[i, j]
        diff = self._coords[i] - self._coords[j]
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def pairwise(self, rows=None, cols=None) -> np.ndarray:
        """Dense block of the distance matrix."""
        rows = np.arange(self._n) if rows is None else np.asarray(rows)
        cols = rows if cols is None else np.asarray(cols)
        if self._matrix is not None:
            return self._matrix[np.ix_(rows, cols)]
        if rows.size * cols.size > DENSE_LIMIT**2:
            raise MemoryError("refusing a %d x %d dense distance block" % (rows.size, cols.size))
        return cdist(self._coords[rows], self._coords[cols])

    def distance_matrix(self) -> np.ndarray:
        return self.pairwise()

    def from_base(self) -> np.ndarray:
        """Distances d(x, x0) for every point."""
        return self.dist(np.arange(self._n), self.base_point_index)

    def neighbor_pairs(self, t: float, rows=None):
        """Pairs ``i < j`` with ``dist(i, j) < t`` (strict).

        Parameters
        ----------
        t : float
            Threshold.
        rows : array of int, optional
            Restrict to this subset of points; returned indices are then
            positions within ``rows``.

        Returns
        -------
        i, j : ndarray of int
        d : ndarray of float
        """
        idx = np.arange(self._n) if rows is None else np.asarray(rows, dtype=np.int64)
        if self._coords is not None:
            tree = cKDTree(self._coords[idx])
            pairs = tree.query_pairs(t, output_type="ndarray").reshape(-1, 2)
            i, j = pairs[:, 0].astype(np.int64), pairs[:, 1].astype(np.int64)
            d = self.dist(idx[i], idx[j])
        else:
            sub = self._matrix[np.ix_(idx, idx)]
            i, j = np.nonzero(np.triu(sub < t, k=1))
            d = sub[i, j]
        keep = d < t
        i, j, d = i[keep], j[keep], d[keep]
        order = np.lexsort((j, i))
        return i[order], j[order], d[order]

    def diameter(self) -> float:
        if self._n == 1:
            return 0.0
        if self._matrix is not None:
            return float(self._matrix.max())
        if self._n <= 4096:
            return float(self.pairwise().max())
        # bounding-box diagonal is an upper bound and exact enough for "t >= diameter" checks
        span = self._coords.max(axis=0) - self._coords.min(axis=0)
        return float(np.sqrt(np.sum(span * span)))

    def subspace(self, indices, base_point: int | None = None) -> "MetricSpace":
        """Restriction to ``indices`` (in that order)."""
        indices = np.asarray(indices, dtype=np.int64)
        ids = [self.ids[k] for k in indices]
        if base_point is None:
            hits = np.flatnonzero(indices == self.base_point_index)
            base_point = int(hits[0]) if hits.size else 0
        if self._matrix is not None:
            return MetricSpace(matrix=self._matrix[np.ix_(indices, indices)], ids=ids, base_point=base_point)
        return MetricSpace(coords=self._coords[indices], ids=ids, base_point=base_point)


class GridSpace(MetricSpace):
    """The regular grid of ``L**D`` cell centres in ``[0, 1]**D``.

    Point ``k`` has multi-index ``np.unravel_index(k, (L,) * D)`` and
    coordinates ``(i + 0.5) / L`` per axis.
    """

    def __init__(self, D: int, L: int):
        D = int(D)
        L = int(L)
        if D < 1:
            raise ValueError("grid dimension must be positive")
        if L < 1 or L & (L - 1):
            raise ValueError("grid side L=%d is not a power of two" % L)
        axes = [(np.arange(L) + 0.5) / L] * D
        coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, D)
        super().__init__(coords=coords)
        self.D = D
        self.L = L
        self.l_max = L.bit_length() - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.L,) * self.D

    def __repr__(self) -> str:
        return "GridSpace(D=%d, L=%d)" % (self.D, self.L)

    def cell_labels(self, level: int) -> np.ndarray:
        """Flat index of the level-``level`` dyadic cell holding each point."""
        if not 0 <= level <= self.l_max:
            raise ValueError("level out of range")
        shift = self.l_max - level
        multi = np.unravel_index(np.arange(self.n_points), self.shape)
        side = 1 << level
        return np.ravel_multi_index(tuple(m >> shift for m in multi), (side,) * self.D)


class ThresholdedMetric:
    """The metric ``min(d, t)`` on a base space.

    Neighbour pairs (``d < t``, strict) are computed on first use and
    cached; pairs at distance exactly ``t`` count as non-neighbours.
    """

    def __init__(self, base: MetricSpace, t: float):
        t = float(t)
        if not t > 0:
            raise ValueError("threshold must be positive, got %r" % t)
        self.base = base
        self.t = t

    def __len__(self) -> int:
        return len(self.base)

    def __repr__(self) -> str:
        return "ThresholdedMetric(%r, t=%g)" % (self.base, self.t)

    def value(self, i, j):
        return np.minimum(self.base.dist(i, j), self.t)

    @cached_property
    def neighbors(self):
        """``(i, j, d)`` for all pairs ``i < j`` with ``d < t``."""
        return self.base.neighbor_pairs(self.t)

    def pairwise(self, rows=None, cols=None) -> np.ndarray:
        return np.minimum(self.base.pairwise(rows, cols), self.t)

    def as_space(self) -> MetricSpace:
        """Dense copy of ``d_t`` as an explicit-matrix space."""
        return MetricSpace(matrix=self.pairwise(), ids=self.base.ids, base_point=self.base.base_point_index)


def build_space(points=None, coords=None, matrix=None, base_point: int = 0, atol: float = 1e-12) -> MetricSpace:
    """Validate inputs and build a :class:`MetricSpace`.

    Parameters
    ----------
    points : sequence, optional
        Point ids.  Defaults to ``0 .. N-1``.
    coords : array_like of shape (N,) or (N, D), optional
    matrix : array_like of shape (N, N), optional
    base_point : int
    atol : float
        Tolerance for the symmetry check.

    Raises
    ------
    ValueError
        Non-symmetric or negative matrix, nonzero diagonal, or two distinct
        points at distance zero.
    """
    if (coords is None) == (matrix is None):
        raise ValueError("give exactly one of coords and matrix")
    if matrix is not None:
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise ValueError("distance matrix must be square and nonempty")
        if not np.all(np.isfinite(m)):
            raise ValueError("distance matrix has non-finite entries")
        if np.any(np.abs(m - m.T) > atol):
            raise ValueError("distance matrix is not symmetric")
        if np.any(m < 0):
            raise ValueError("negative distances")
        if np.any(np.diag(m) != 0):
            raise ValueError("distance matrix diagonal must be zero")
        off = m + np.eye(m.shape[0])
        if np.any(off <= 0):
            raise ValueError("distinct points at distance zero")
        return MetricSpace(matrix=0.5 * (m + m.T), ids=points, base_point=base_point)
    c = np.asarray(coords, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    if c.ndim != 2 or c.shape[0] == 0:
        raise ValueError("coordinates must be an (N, D) array with N >= 1")
    if not np.all(np.isfinite(c)):
        raise ValueError("coordinates have non-finite entries")
    if np.unique(c, axis=0).shape[0] != c.shape[0]:
        raise ValueError("distinct points at distance zero")
    return MetricSpace(coords=c, ids=points, base_point=base_point)


def threshold_metric(space: MetricSpace, t: float) -> ThresholdedMetric:
    """``d_t = min(d, t)`` with neighbour lists materialised."""
    tm = ThresholdedMetric(space, t)
    tm.neighbors
    return tm


def summability_partial_sums(space: MetricSpace, r, p: float = 1.0, K: int | None = None) -> np.ndarray:
    """Partial sums ``S_k = sum_{x among first k points} d(x, x0)**p * sqrt(r_x)``.

    No verdict is returned; a bounded sequence suggests the summability
    condition holds, steady growth suggests it fails.

    Parameters
    ----------
    space : MetricSpace
    r : Measure or array_like
        Probability vector in the space's point order.
    p : float
    K : int, optional
        Number of partial sums (default: all points).
    """
    mass = np.asarray(getattr(r, "mass", r), dtype=float)
    if mass.shape != (len(space),):
        raise ValueError("measure does not match the space")
    K = len(space) if K is None else int(K)
    terms = space.from_base()[:K] ** p * np.sqrt(mass[:K])
    return np.cumsum(terms)


def bin_cdf(cdf: Callable, M: int, k_min: int, k_max: int, check_points: int = 1):
    """Discretise a distribution by CDF increments on the lattice ``k / M``.

    Bin ``k`` covers ``(k/M, (k+1)/M]`` and receives ``F((k+1)/M) - F(k/M)``.
    Mass left of ``k_min / M`` goes to the first bin and mass right of
    ``(k_max + 1) / M`` to the last.

    Parameters
    ----------
    cdf : callable
        Vectorised nondecreasing function with values in [0, 1].
    M : int
        Bins per unit length.
    k_min, k_max : int
        Inclusive bin range.

    Returns
    -------
    measure : Measure
        Probability measure on the points ``k / M``.
    residual : tuple of float
        Mass absorbed into the (left, right) boundary bins.
    """
    from .measures import Measure

    M = int(M)
    if M <= 0:
        raise ValueError("M must be positive")
    if k_max < k_min:
        raise ValueError("empty bin range")
    ks = np.arange(k_min, k_max + 2)
    F = np.asarray(cdf(ks / M), dtype=float)
    if np.any(np.diff(F) < -1e-15) or np.any(F < -1e-15) or np.any(F > 1 + 1e-15):
        raise ValueError("cdf is not a nondecreasing function into [0, 1]")
    F = np.clip(F, 0.0, 1.0)
    masses = np.maximum(np.diff(F), 0.0)
    left = float(F[0])
    right = float(1.0 - F[-1])
    masses[0] += left
    masses[-1] += right
    masses /= masses.sum()
    zero = np.flatnonzero(ks[:-1] == 0)
    space = MetricSpace(coords=ks[:-1] / M, ids=[str(k) for k in ks[:-1]], base_point=int(zero[0]) if zero.size else 0)
    return Measure(space, masses), (left, right)
