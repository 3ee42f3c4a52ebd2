"""Exact transport and transshipment problems as min-cost flows.

All problems reduce to one uncapacitated min-cost flow kernel
(:func:`otlimits._flow.ssp_solve`).  Node potentials returned by the kernel
are the dual certificates: for an arc ``u -> v`` of cost ``c`` they satisfy
``c + pot[u] - pot[v] >= 0``, with equality on arcs that carry flow.

Transport of ``r`` to ``s`` uses a bipartite network (source copy ``x'``,
sink copy ``y''``) so that any exponent ``p`` is handled exactly.  The
thresholded variant adds one virtual node ``V`` with arcs ``x' -> V`` and
``V -> y''`` of cost ``t**p / 2`` and keeps only direct arcs with
``d < t``.  Limit functionals use a transshipment on the points themselves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.sparse import coo_matrix

from ._flow import residual_index, ssp_solve
from .measures import Measure
from .space import MetricSpace, ThresholdedMetric

__all__ = [
    "InfeasibleFlowError",
    "TransportPlan",
    "DualPair",
    "TransportResult",
    "FlowProblem",
    "FlowSolution",
    "LimitFlowNetwork",
    "DualFaceNetwork",
    "wasserstein",
    "thresholded_wasserstein",
    "limit_flow",
    "dual_face_max",
    "dual_is_unique",
]

BALANCE_TOL = 1e-10


class InfeasibleFlowError(RuntimeError):
    """Raised when supplies cannot be routed, or a dual face is empty."""


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse coupling ``w``; entry ``k`` moves ``mass[k]`` from ``rows[k]`` to ``cols[k]``."""

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    shape: tuple[int, int]

    def dense(self) -> np.ndarray:
        return coo_matrix((self.mass, (self.rows, self.cols)), shape=self.shape).toarray()

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows, weights=self.mass, minlength=self.shape[0])

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.cols, weights=self.mass, minlength=self.shape[1])

    def support(self, rel_tol: float = 1e-12):
        """``(rows, cols)`` of entries above ``rel_tol * max(mass)``."""
        if self.mass.size == 0:
            return self.rows, self.cols
        keep = self.mass > rel_tol * self.mass.max()
        return self.rows[keep], self.cols[keep]


@dataclass(frozen=True, eq=False)
class DualPair:
    """Kantorovich potentials ``(lam, mu)``; ``mu`` is ``None`` for the null case."""

    lam: np.ndarray
    mu: np.ndarray | None = None
    optimal: bool = False


class TransportResult(NamedTuple):
    value: float
    plan: TransportPlan
    dual: DualPair | None
    cost: float


@dataclass(eq=False)
class FlowSolution:
    flow: np.ndarray
    potential: np.ndarray
    cost: float
    leftover: float


class FlowProblem:
    """Uncapacitated min-cost flow with real supplies.

    Parameters
    ----------
    n_nodes : int
    tail, head : array of int
        Arc endpoints.
    cost : array of float
    supply : array of float, optional
        Node divergences ``b`` (positive means excess); must sum to zero.
    hub : int
        Index of a node adjacent to (almost) all others, or -1.  Its arcs
        are handed out lazily by the kernel instead of being scanned.
    """

    def __init__(self, n_nodes, tail, head, cost, supply=None, hub: int = -1):
        self.n_nodes = int(n_nodes)
        self.tail = np.ascontiguousarray(tail, dtype=np.int64)
        self.head = np.ascontiguousarray(head, dtype=np.int64)
        self.cost = np.ascontiguousarray(cost, dtype=float)
        if not (self.tail.shape == self.head.shape == self.cost.shape):
            raise ValueError("arc arrays differ in length")
        self.supply = None if supply is None else np.ascontiguousarray(supply, dtype=float)
        self.hub = int(hub)
        self._index = None

    @property
    def n_arcs(self) -> int:
        return self.tail.size

    def _residual(self):
        if self._index is None:
            self._index = residual_index(self.n_nodes, self.tail, self.head)
        return self._index

    def solve(self, supply=None, potential=None) -> FlowSolution:
        """Run the kernel.

        Parameters
        ----------
        supply : array, optional
            Overrides the stored supplies.
        potential : array, optional
            Starting potentials; must give nonnegative reduced costs on all
            arcs.  Zero potentials are used by default, which requires
            nonnegative costs.

        Raises
        ------
        ValueError
            Supplies do not balance.
        InfeasibleFlowError
            Some excess cannot reach a deficit.
        """
        b = self.supply if supply is None else np.ascontiguousarray(supply, dtype=float)
        if b is None or b.shape != (self.n_nodes,):
            raise ValueError("supply vector missing or of wrong length")
        scale = float(np.abs(b).sum())
        if abs(b.sum()) > BALANCE_TOL * max(1.0, scale):
            raise ValueError("unbalanced divergence: sum = %.3g" % b.sum())
        if potential is None:
            if self.n_arcs and self.cost.min() < 0:
                raise ValueError("negative costs need starting potentials")
            pot = np.zeros(self.n_nodes)
        else:
            pot = np.array(potential, dtype=float)
        indptr, arc_ids = self._residual()
        tol = 1e-14 * max(float(np.abs(b).max(initial=0.0)), 1e-300)
        flow, leftover = ssp_solve(self.tail, self.head, self.cost, indptr, arc_ids, b, pot, tol, self.hub)
        if leftover > 1e-9 * max(scale, 1e-300):
            raise InfeasibleFlowError("%.3g units of supply could not be routed" % leftover)
        return FlowSolution(flow, pot, float(flow @ self.cost), float(leftover))

    def to_dimacs(self, supply=None, scale: float | None = None, comment: str = "") -> str:
        """DIMACS ``min`` instance text (1-based nodes, unbounded capacities).

        With ``scale`` set, costs and supplies are multiplied by it and
        rounded to integers, as most external solvers expect; otherwise
        real numbers are written with full precision.
        """
        b = self.supply if supply is None else np.asarray(supply, dtype=float)
        fmt = repr if scale is None else (lambda v: str(int(round(v * scale))))
        lines = []
        if comment:
            lines.extend("c " + ln for ln in comment.splitlines())
        lines.append("p min %d %d" % (self.n_nodes, self.n_arcs))
        if b is not None:
            for v in np.flatnonzero(b):
                lines.append("n %d %s" % (v + 1, fmt(float(b[v]))))
        big = int(min(np.abs(b).sum() if b is not None else 0.0, 1e15) * (scale or 1)) + 1
        for k in range(self.n_arcs):
            lines.append("a %d %d 0 %d %s" % (self.tail[k] + 1, self.head[k] + 1, big, fmt(float(self.cost[k]))))
        return "\n".join(lines) + "\n"


def _mass(m, n: int, name: str) -> np.ndarray:
    v = np.asarray(getattr(m, "mass", getattr(m, "values", m)), dtype=float)
    if v.shape != (n,):
        raise ValueError("%s has shape %s, expected (%d,)" % (name, v.shape, n))
    return v


def _check_pair(space, r, s):
    n = len(space)
    a = _mass(r, n, "r")
    b = _mass(s, n, "s")
    for name, v in (("r", a), ("s", b)):
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
            raise ValueError("%s is not a probability vector" % name)
    for m in (r, s):
        if isinstance(m, Measure) and m.space is not space and len(m.space) != n:
            raise ValueError("measure lives on a different space")
    return a, b


def _pin(lam, mu, base: int):
    c = lam[base]
    if np.isfinite(c):
        lam = lam - c
        if mu is not None:
            mu = mu + c
    return lam, mu


def _plan_from_pairs(rows, cols, mass, shape) -> TransportPlan:
    keep = mass > 0
    m = coo_matrix((mass[keep], (rows[keep], cols[keep])), shape=shape)
    m.sum_duplicates()
    order = np.lexsort((m.col, m.row))
    return TransportPlan(
        m.row[order].astype(np.int64), m.col[order].astype(np.int64), m.data[order].astype(float), shape
    )


def _extend_duals(C, lam, mu, rows, cols):
    """c-transform potentials onto zero-mass points.

    ``lam`` and ``mu`` are valid on ``rows``/``cols``; the result satisfies
    ``lam_x + mu_y <= C[x, y]`` for every pair.
    """
    n = C.shape[0]
    L = np.full(n, np.nan)
    Mu = np.full(n, np.nan)
    L[rows] = lam
    Mu[cols] = mu
    other_rows = np.setdiff1d(np.arange(n), rows)
    if other_rows.size:
        L[other_rows] = np.min(C[np.ix_(other_rows, cols)] - mu[None, :], axis=1)
    other_cols = np.setdiff1d(np.arange(n), cols)
    if other_cols.size:
        Mu[other_cols] = np.min(C[:, other_cols] - L[:, None], axis=0)
    return L, Mu


def wasserstein(metric, r, s, p: float = 1.0) -> TransportResult:
    """Exact ``W_p(r, s)`` with an optimal plan and dual pair.

    Parameters
    ----------
    metric : MetricSpace or ThresholdedMetric
        A thresholded metric dispatches to :func:`thresholded_wasserstein`.
    r, s : Measure or array_like
        Probability vectors on the points of ``metric``.
    p : float
        Cost exponent; ``0 < p < 1`` is accepted but experimental.

    Returns
    -------
    TransportResult
        ``value`` is ``W_p``, ``cost`` is ``W_p**p``.  The dual is pinned so
        that ``lam[x0] == 0``.
    """
    if isinstance(metric, ThresholdedMetric):
        return thresholded_wasserstein(metric, r, s, p)
    if not p > 0:
        raise ValueError("p must be positive")
    a, b = _check_pair(metric, r, s)
    n = len(metric)
    rows = np.flatnonzero(a)
    cols = np.flatnonzero(b)
    C_sub = metric.pairwise(rows, cols) ** p
    nr, nc = rows.size, cols.size
    tail = np.repeat(np.arange(nr, dtype=np.int64), nc)
    head = nr + np.tile(np.arange(nc, dtype=np.int64), nr)
    prob = FlowProblem(nr + nc, tail, head, C_sub.ravel(), np.concatenate([a[rows], -b[cols]]))
    sol = prob.solve()
    plan = _plan_from_pairs(rows[tail], cols[head - nr], sol.flow, (n, n))
    C = metric.pairwise() ** p if n * n <= 4 * 10**7 else None
    if C is not None:
        lam, mu = _extend_duals(C, -sol.potential[:nr], sol.potential[nr:], rows, cols)
    else:
        lam = np.full(n, np.nan)
        mu = np.full(n, np.nan)
        lam[rows] = -sol.potential[:nr]
        mu[cols] = sol.potential[nr:]
    lam, mu = _pin(lam, mu, metric.base_point_index)
    cost = max(sol.cost, 0.0)
    return TransportResult(cost ** (1.0 / p), plan, DualPair(lam, mu, optimal=True), cost)


def _hub_decomposition(into_hub, out_of_hub):
    """Pair up mass entering and leaving the hub (north-west corner rule)."""
    src = np.flatnonzero(into_hub > 0)
    dst = np.flatnonzero(out_of_hub > 0)
    a = into_hub[src].copy()
    b = out_of_hub[dst].copy()
    rows, cols, mass = [], [], []
    i = j = 0
    while i < a.size and j < b.size:
        m = min(a[i], b[j])
        rows.append(src[i])
        cols.append(dst[j])
        mass.append(m)
        a[i] -= m
        b[j] -= m
        if a[i] <= b[j]:
            i += 1
        else:
            j += 1
    return np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(mass, dtype=float)


def thresholded_wasserstein(tm: ThresholdedMetric, r, s, p: float = 1.0) -> TransportResult:
    """``W_p`` under ``d_t = min(d, t)`` via the virtual-node network.

    Only points in ``supp(r) | supp(s)`` enter the network.  Direct arcs
    join source and sink copies at distance ``< t``; everything else routes
    through the virtual node at cost ``t**p / 2`` per leg.

    Returns
    -------
    TransportResult
        The dual is defined on ``supp(r) | supp(s)`` and is ``nan``
        elsewhere; it is pinned at the base point when that point is in
        the union support, otherwise at the first support point.
    """
    if not p > 0:
        raise ValueError("p must be positive")
    base = tm.base
    a, b = _check_pair(base, r, s)
    n = len(base)
    U = np.flatnonzero((a > 0) | (b > 0))
    k = U.size
    ii, jj, dd = base.neighbor_pairs(tm.t, rows=U)
    # ordered neighbour pairs, including each point with itself
    pi = np.concatenate([ii, jj, np.arange(k)])
    pj = np.concatenate([jj, ii, np.arange(k)])
    pc = np.concatenate([dd, dd, np.zeros(k)]) ** p
    src_ok = a[U] > 0
    dst_ok = b[U] > 0
    keep = src_ok[pi] & dst_ok[pj]
    pi, pj, pc = pi[keep], pj[keep], pc[keep]
    # nodes: sources 0..k-1, sinks k..2k-1, hub 2k
    hub = 2 * k
    srcs = np.flatnonzero(src_ok)
    dsts = np.flatnonzero(dst_ok)
    half = tm.t**p / 2.0
    tail = np.concatenate([pi, srcs, np.full(dsts.size, hub)])
    head = np.concatenate([k + pj, np.full(srcs.size, hub), k + dsts])
    cost = np.concatenate([pc, np.full(srcs.size + dsts.size, half)])
    supply = np.concatenate([a[U], -b[U], [0.0]])
    sol = FlowProblem(2 * k + 1, tail, head, cost, supply, hub=hub).solve()

    f = sol.flow
    m_direct = pi.size
    rows, cols, mass = U[pi], U[pj], f[:m_direct]
    into = np.zeros(k)
    into[srcs] = f[m_direct : m_direct + srcs.size]
    out = np.zeros(k)
    out[dsts] = f[m_direct + srcs.size :]
    hr, hc, hm = _hub_decomposition(into, out)
    plan = _plan_from_pairs(np.concatenate([rows, U[hr]]), np.concatenate([cols, U[hc]]), np.concatenate([mass, hm]), (n, n))

    lam_u = -sol.potential[:k]
    mu_u = sol.potential[k : 2 * k]
    # c-transform onto zero-mass points of the union support; pairs that are
    # not neighbours cost t**p, so t**p - max(mu) is a safe lower envelope
    tp = tm.t**p
    ai = np.concatenate([ii, jj, np.arange(k)])
    aj = np.concatenate([jj, ii, np.arange(k)])
    ac = np.concatenate([dd, dd, np.zeros(k)]) ** p
    if not src_ok.all():
        best = np.full(k, tp - mu_u[dst_ok].max())
        ok = ~src_ok[ai] & dst_ok[aj]
        np.minimum.at(best, ai[ok], ac[ok] - mu_u[aj[ok]])
        lam_u = np.where(src_ok, lam_u, best)
    if not dst_ok.all():
        best = np.full(k, tp - lam_u.max())
        ok = ~dst_ok[aj]
        np.minimum.at(best, aj[ok], ac[ok] - lam_u[ai[ok]])
        mu_u = np.where(dst_ok, mu_u, best)
    lam = np.full(n, np.nan)
    mu = np.full(n, np.nan)
    lam[U] = lam_u
    mu[U] = mu_u
    pin = base.base_point_index if np.isfinite(lam[base.base_point_index]) else U[0]
    lam, mu = _pin(lam, mu, pin)
    cost_value = max(sol.cost, 0.0)
    return TransportResult(cost_value ** (1.0 / p), plan, DualPair(lam, mu, optimal=True), cost_value)


class LimitFlowNetwork:
    """Reusable transshipment network for ``max_{lam in S*} <g, lam>``.

    The value is the cheapest way to move ``g+`` onto ``g-`` along arcs of
    cost ``d**p``, with intermediate stops allowed.  For a thresholded
    metric the complete graph is replaced by neighbour arcs plus the
    virtual node.

    Parameters
    ----------
    metric : MetricSpace or ThresholdedMetric
    p : float
    """

    def __init__(self, metric, p: float = 1.0):
        if not p > 0:
            raise ValueError("p must be positive")
        self.metric = metric
        self.p = float(p)
        if isinstance(metric, ThresholdedMetric):
            n = len(metric.base)
            i, j, d = metric.neighbors
            hub = n
            nodes = np.arange(n, dtype=np.int64)
            tail = np.concatenate([i, j, nodes, np.full(n, hub)])
            head = np.concatenate([j, i, np.full(n, hub), nodes])
            c = np.concatenate([d**p, d**p, np.full(2 * n, metric.t**p / 2.0)])
            self.problem = FlowProblem(n + 1, tail, head, c, hub=hub)
            self.base_index = metric.base.base_point_index
        else:
            n = len(metric)
            C = metric.pairwise() ** p
            tail, head = np.nonzero(~np.eye(n, dtype=bool))
            self.problem = FlowProblem(n, tail, head, C[tail, head])
            self.base_index = metric.base_point_index
        self.n_points = n

    def solve(self, g):
        """Return ``(value, lam)`` with ``lam`` pinned to zero at the base point."""
        v = _mass(g, self.n_points, "g")
        supply = v if self.problem.n_nodes == self.n_points else np.append(v, 0.0)
        if not np.any(v):
            return 0.0, np.zeros(self.n_points)
        sol = self.problem.solve(supply)
        lam = -sol.potential[: self.n_points]
        lam = lam - lam[self.base_index]
        return max(sol.cost, 0.0), lam

    def value(self, g) -> float:
        return self.solve(g)[0]

    __call__ = value


def limit_flow(metric, g, p: float = 1.0) -> float:
    """``max_{lam in S*} <g, lam>`` for a balanced signed vector ``g``.

    Computed as the min-cost transshipment of ``g+`` onto ``g-`` with arc
    costs ``d**p``.  For ``p = 1`` this equals ``W_1(g+, g-)``; for
    ``p > 1`` it can be strictly smaller than ``W_p**p(g+, g-)`` because
    mass may stop over at intermediate points.

    Raises
    ------
    ValueError
        If ``g`` does not sum to zero.
    """
    return LimitFlowNetwork(metric, p).value(g)


def dual_is_unique(result: TransportResult, r, s, rel_tol: float = 1e-12) -> bool:
    """Whether the optimal dual is unique on the supports (up to the shift).

    True iff the support graph of the plan, a bipartite graph on
    ``supp(r)`` and ``supp(s)``, is connected.
    """
    from scipy.sparse.csgraph import connected_components

    a = np.asarray(getattr(r, "mass", r))
    b = np.asarray(getattr(s, "mass", s))
    rows, cols = result.plan.support(rel_tol)
    sr = np.flatnonzero(a > 0)
    sc = np.flatnonzero(b > 0)
    ri = {x: k for k, x in enumerate(sr)}
    ci = {y: k + sr.size for k, y in enumerate(sc)}
    u = np.array([ri[x] for x in rows])
    v = np.array([ci[y] for y in cols])
    n = sr.size + sc.size
    graph = coo_matrix((np.ones(u.size), (u, v)), shape=(n, n))
    return connected_components(graph, directed=False)[0] == 1


class DualFaceNetwork:
    """Reusable network for maximising linear functionals over optimal duals.

    The optimal dual face is the set of feasible pairs that are tight on
    the support of one optimal plan.  Maximising
    ``<a, lam> + <b, mu>`` over it is a min-cost flow with arcs
    ``x' -> y''`` of cost ``d**p`` plus, on the plan support, reverse arcs
    of cost ``-d**p``.  The optimal dual of the plan's solve is a valid
    starting potential.

    Parameters
    ----------
    metric : MetricSpace
    r, s : Measure or array_like
    p : float
    result : TransportResult, optional
        A solved :func:`wasserstein` for ``(r, s)``; computed if absent.

    Raises
    ------
    InfeasibleFlowError
        If the supplied plan and dual are not jointly optimal, so the face
        they describe is empty.
    """

    def __init__(self, metric: MetricSpace, r, s, p: float = 1.0, result: TransportResult | None = None):
        if isinstance(metric, ThresholdedMetric):
            metric = metric.as_space()
        n = len(metric)
        if result is None:
            result = wasserstein(metric, r, s, p)
        lam0, mu0 = result.dual.lam, result.dual.mu
        if not (np.all(np.isfinite(lam0)) and np.all(np.isfinite(mu0))):
            raise ValueError("dual face maximisation needs a dual defined on every point")
        C = metric.pairwise() ** p
        tail = np.repeat(np.arange(n, dtype=np.int64), n)
        head = n + np.tile(np.arange(n, dtype=np.int64), n)
        rows, cols = result.plan.support()
        tail = np.concatenate([tail, n + cols])
        head = np.concatenate([head, rows])
        cost = np.concatenate([C.ravel(), -C[rows, cols]])
        pot = np.concatenate([-lam0, mu0])
        rc = cost + pot[tail] - pot[head]
        if rc.min() < -1e-9 * max(1.0, float(C.max())):
            raise InfeasibleFlowError("dual face is empty: the plan is not optimal for these potentials")
        self.n_points = n
        self.result = result
        self.problem = FlowProblem(2 * n, tail, head, cost)
        self._pot = pot

    def value(self, g, h=None, alpha: float = 1.0) -> float:
        """``max sqrt(alpha) <g, lam> + sqrt(1 - alpha) <h, mu>`` over the face."""
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if h is None and alpha != 1.0:
            raise ValueError("h is required unless alpha = 1")
        n = self.n_points
        gv = np.sqrt(alpha) * _mass(g, n, "g")
        hv = np.zeros(n) if h is None else np.sqrt(1.0 - alpha) * _mass(h, n, "h")
        if not (np.any(gv) or np.any(hv)):
            return 0.0
        return self.problem.solve(np.concatenate([gv, -hv]), potential=self._pot).cost


def dual_face_max(metric: MetricSpace, r, s, p, g, h=None, alpha: float = 1.0, result: TransportResult | None = None) -> float:
    """Maximise ``sqrt(alpha) <g, lam> + sqrt(1 - alpha) <h, mu>`` over optimal duals.

    Parameters
    ----------
    metric : MetricSpace
    r, s : Measure or array_like
    p : float
    g : GaussianDraw or array_like
        Paired with ``lam``.
    h : GaussianDraw or array_like, optional
        Paired with ``mu``.  Omit for the one-sample form (``alpha`` must
        then be 1).
    alpha : float in [0, 1]
    result : TransportResult, optional
        A solved :func:`wasserstein` for ``(r, s)``; computed if absent.

    See Also
    --------
    DualFaceNetwork : the same computation, reusable across draws.
    """
    return DualFaceNetwork(metric, r, s, p, result).value(g, h, alpha)
