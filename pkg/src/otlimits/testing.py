"""One- and two-sample tests for equality of distributions.

The statistic is the empirical Wasserstein distance scaled by the null
rate: ``n**(1/2p) W_p`` for one sample and ``rho**(1/p) W_p`` with
``rho = sqrt(n m / (n + m))`` for two.  Its null law is approximated by
Monte Carlo draws of the limit (exact) or of a tree bound that dominates
it, which yields a conservative test.  With a thresholded metric the
statistic uses ``d_t <= d``, so comparing it to a bound under ``d`` stays
conservative.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .limits import DEFAULT_M, LimitSample, normalize_method, p_value, quantile, simulate_null_limit
from .measures import Measure, empirical_measure
from .solver import wasserstein
from .space import GridSpace, MetricSpace, ThresholdedMetric
from .tree import WeightedTree

__all__ = ["TestReport", "one_sample_test", "two_sample_test", "threshold_sweep", "pooled_measure"]

DEFAULT_ALPHA = 0.05


@dataclass
class TestReport:
    """Outcome of one test.

    ``statistic`` is the scaled distance, ``distance`` the raw ``W_p`` (or
    ``W_p`` under ``d_t`` when ``t`` is set).  ``reject`` is
    ``statistic > critical_value``, the ``1 - alpha`` quantile of the limit
    sample.
    """

    __test__ = False

    statistic: float
    distance: float
    n: int
    m: int | None
    p: float
    t: float | None
    p_value: float
    critical_value: float
    alpha: float
    reject: bool
    method: str
    limit_kind: str
    M: int
    seed: int
    scaling: str
    null_measure: str
    quantiles: dict = field(default_factory=dict)
    wall_time: float = 0.0
    limit: LimitSample | None = field(default=None, repr=False)

    def to_dict(self, timings: bool = False) -> dict:
        out = asdict(self)
        out.pop("limit")
        if not timings:
            out.pop("wall_time")
        return out


def _empirical(space: MetricSpace, sample) -> Measure:
    if isinstance(sample, Measure):
        if sample.n is None:
            raise ValueError("a sample given as a Measure must record its size n")
        return sample
    if len(sample) == 0:
        raise ValueError("empty sample")
    return empirical_measure(space, sample)


def pooled_measure(x: Measure, y: Measure) -> Measure:
    """``(n x + m y) / (n + m)``, the plug-in for the unknown common law."""
    n, m = x.n, y.n
    w = n * x.mass + m * y.mass
    return Measure(x.space, w / w.sum())


def _base(metric) -> MetricSpace:
    return metric.base if isinstance(metric, ThresholdedMetric) else metric


def _limit_structure(metric, method: str, tree: WeightedTree | None):
    method = normalize_method(method)
    base = _base(metric)
    if method == "tree":
        return tree if tree is not None else base
    if method == "grid":
        if not isinstance(base, GridSpace):
            raise ValueError("method grid needs a GridSpace")
        return base
    return metric


def _resolve_method(metric, method: str) -> str:
    if method == "bound":
        return "grid" if isinstance(_base(metric), GridSpace) else "tree"
    return normalize_method(method)


def _report(stat, dist, n, m, p, t, limit: LimitSample, alpha, method, null_measure, seed, wall):
    crit = quantile(limit, 1.0 - alpha)
    qs = {str(q): quantile(limit, q) for q in (0.5, 0.9, 0.95, 0.99)}
    return TestReport(
        statistic=float(stat),
        distance=float(dist),
        n=int(n),
        m=None if m is None else int(m),
        p=float(p),
        t=None if t is None else float(t),
        p_value=p_value(limit, stat),
        critical_value=crit,
        alpha=float(alpha),
        reject=bool(stat > crit),
        method=method,
        limit_kind=limit.kind,
        M=limit.M,
        seed=int(seed),
        scaling=limit.scaling,
        null_measure=null_measure,
        quantiles=qs,
        wall_time=wall,
        limit=limit,
    )


def one_sample_test(
    metric,
    r0,
    sample,
    p: float = 1.0,
    method: str = "exact",
    M: int = DEFAULT_M,
    seed: int = 0,
    alpha: float = DEFAULT_ALPHA,
    threads: int | None = 1,
    tree: WeightedTree | None = None,
    limit: LimitSample | None = None,
) -> TestReport:
    """Test ``H0: sample ~ r0`` with statistic ``n**(1/2p) W_p(r_n, r0)``.

    Parameters
    ----------
    metric : MetricSpace or ThresholdedMetric
    r0 : Measure
        Hypothesised law; it also feeds the limit simulation.
    sample : sequence of point ids or indices, or Measure with ``n``
    p : float
    method : {"exact", "tree", "grid", "bound"}
    M : int
        Limit draws.
    seed : int
    alpha : float
        Nominal level.
    tree : WeightedTree, optional
        Tree for ``method="tree"``; default is a minimum spanning tree.
    limit : LimitSample, optional
        Reuse a previously simulated null sample.
    """
    t0 = time.perf_counter()
    base = _base(metric)
    x = _empirical(base, sample)
    method = _resolve_method(metric, method)
    dist = wasserstein(metric, x, r0, p).value
    stat = x.n ** (1.0 / (2.0 * p)) * dist
    if limit is None:
        structure = _limit_structure(metric, method, tree)
        limit = simulate_null_limit(structure, r0, p, M, method, seed, threads, scaling="n^(1/2p)")
    t = metric.t if isinstance(metric, ThresholdedMetric) else None
    return _report(stat, dist, x.n, None, p, t, limit, alpha, method, "hypothesised", seed, time.perf_counter() - t0)


def two_sample_test(
    metric,
    sample_x,
    sample_y,
    p: float = 1.0,
    method: str = "exact",
    M: int = DEFAULT_M,
    seed: int = 0,
    alpha: float = DEFAULT_ALPHA,
    threads: int | None = 1,
    tree: WeightedTree | None = None,
    limit: LimitSample | None = None,
) -> TestReport:
    """Test ``H0: both samples share one law`` with ``rho**(1/p) W_p``.

    The limit is simulated under the pooled empirical measure.  With a
    :class:`ThresholdedMetric` the distance is computed under ``d_t``; the
    ``tree`` and ``grid`` bounds are always those of the base metric.

    Parameters
    ----------
    metric : MetricSpace or ThresholdedMetric
    sample_x, sample_y : sequences of point ids or indices, or Measures with ``n``
    p, method, M, seed, alpha, threads, tree, limit
        As in :func:`one_sample_test`.
    """
    t0 = time.perf_counter()
    base = _base(metric)
    x = _empirical(base, sample_x)
    y = _empirical(base, sample_y)
    method = _resolve_method(metric, method)
    dist = wasserstein(metric, x, y, p).value
    rho = np.sqrt(x.n * y.n / (x.n + y.n))
    stat = rho ** (1.0 / p) * dist
    if limit is None:
        structure = _limit_structure(metric, method, tree)
        limit = simulate_null_limit(structure, pooled_measure(x, y), p, M, method, seed, threads, scaling="rho^(1/p)")
    t = metric.t if isinstance(metric, ThresholdedMetric) else None
    return _report(stat, dist, x.n, y.n, p, t, limit, alpha, method, "pooled", seed, time.perf_counter() - t0)


def threshold_sweep(
    space: MetricSpace,
    sample_x,
    sample_y,
    p: float = 1.0,
    t_list=(),
    method: str = "bound",
    M: int = DEFAULT_M,
    seed: int = 0,
    alpha: float = DEFAULT_ALPHA,
    threads: int | None = 1,
    tree: WeightedTree | None = None,
) -> list[TestReport]:
    """Two-sample tests under ``d_t`` for each threshold in ``t_list``.

    Tree and grid bounds do not depend on ``t``, so their limit sample is
    simulated once and shared; the exact method simulates under each
    ``d_t`` with the same seed.
    """
    t_list = [float(t) for t in t_list]
    if not t_list or min(t_list) <= 0:
        raise ValueError("t_list must contain positive thresholds")
    x = _empirical(space, sample_x)
    y = _empirical(space, sample_y)
    method = _resolve_method(space, method)
    shared = None
    if method != "exact":
        structure = _limit_structure(space, method, tree)
        shared = simulate_null_limit(structure, pooled_measure(x, y), p, M, method, seed, threads, scaling="rho^(1/p)")
    reports = []
    for t in t_list:
        tm = ThresholdedMetric(space, t)
        reports.append(two_sample_test(tm, x, y, p, method, M, seed, alpha, threads, tree, limit=shared))
    return reports
