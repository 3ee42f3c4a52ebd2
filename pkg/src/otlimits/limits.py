"""Monte Carlo samples of the limit laws, with truncation and quantile helpers.

Replicate ``j`` of a run with master seed ``s`` uses its own random stream
(see :func:`otlimits.measures.replicate_rng`).  Two simulations with the
same seed therefore see the same Gaussian draws, which is what makes
per-draw comparisons between the exact statistic and its tree bounds
meaningful.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .measures import Measure, gaussian_draws
from .solver import DualFaceNetwork, LimitFlowNetwork, wasserstein
from .space import GridSpace, MetricSpace, ThresholdedMetric
from .tree import WeightedTree, grid_bound_statistic, spanning_tree, z_statistic

__all__ = [
    "LimitSample",
    "TruncationPlan",
    "truncate",
    "tail_bound",
    "restrict",
    "limit_draws",
    "simulate_null_limit",
    "simulate_alt_limit",
    "quantile",
    "p_value",
    "normalize_method",
]

DEFAULT_M = 10_000

_METHODS = {
    "exact": "exact",
    "exact_flow": "exact",
    "tree": "tree",
    "tree_closed_form": "tree",
    "grid": "grid",
    "grid_bound": "grid",
}
_KINDS = {"exact": "null_exact_flow", "tree": "null_tree", "grid": "null_grid_bound"}


def _check_p(p: float) -> None:
    # below 1 the cost d**p is no metric and the limit theory is not covered
    if not p >= 1:
        raise ValueError("limit laws need p >= 1, got %r" % p)


def normalize_method(method: str) -> str:
    try:
        return _METHODS[method]
    except KeyError:
        raise ValueError("unknown method %r; use exact, tree or grid" % method) from None


@dataclass(frozen=True, eq=False)
class LimitSample:
    """Sorted Monte Carlo draws of a limit statistic.

    Attributes
    ----------
    draws : ndarray
        Ascending draws.
    kind : str
        One of ``null_exact_flow``, ``null_tree``, ``null_grid_bound``,
        ``alt_dual_face``.
    p : float
    scaling : str
        The rate that turns the empirical distance into the statistic this
        sample approximates.
    seed : int
    truncation : dict, optional
        Retained mass and tail bound when the support was truncated.
    """

    draws: np.ndarray
    kind: str
    p: float
    scaling: str
    seed: int
    truncation: dict | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.sort(np.asarray(self.draws, dtype=float))
        d.flags.writeable = False
        object.__setattr__(self, "draws", d)

    @property
    def M(self) -> int:
        return self.draws.size

    def quantile(self, q: float) -> float:
        return quantile(self, q)

    def p_value(self, statistic: float) -> float:
        return p_value(self, statistic)

    def ecdf(self):
        """Step points ``(x, F(x))`` of the empirical distribution function."""
        return self.draws.copy(), np.arange(1, self.M + 1) / self.M

    def to_dict(self, draws_path: str | None = None) -> dict:
        out = {
            "kind": self.kind,
            "p": self.p,
            "scaling": self.scaling,
            "seed": self.seed,
            "M": self.M,
            "draws_path": draws_path,
        }
        if self.truncation is not None:
            out["truncation"] = self.truncation
        if self.meta:
            out["meta"] = self.meta
        return out

    def save(self, json_path: str, draws_path: str | None = None) -> None:
        """Write the JSON descriptor and a one-column CSV of draws."""
        if draws_path is None:
            draws_path = os.path.splitext(json_path)[0] + "_draws.csv"
        with open(draws_path, "w") as fh:
            fh.write("draw\n")
            fh.writelines(repr(float(v)) + "\n" for v in self.draws)
        rel = os.path.relpath(draws_path, os.path.dirname(os.path.abspath(json_path)))
        with open(json_path, "w") as fh:
            json.dump(self.to_dict(rel), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, json_path: str) -> "LimitSample":
        with open(json_path) as fh:
            meta = json.load(fh)
        path = os.path.join(os.path.dirname(os.path.abspath(json_path)), meta["draws_path"])
        draws = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=1)
        return cls(draws, meta["kind"], meta["p"], meta["scaling"], meta["seed"], meta.get("truncation"), meta.get("meta", {}))


@dataclass(frozen=True, eq=False)
class TruncationPlan:
    """Retained index set of a truncated support with its tail bound.

    ``tail_bound`` is ``sum_{x not in I} d(x, x0)**p sqrt(r_x (1 - r_x))``,
    a bound on the first moment of what the star-tree statistic loses.
    """

    indices: np.ndarray
    retained_mass: float
    tail_bound: float
    eps: float
    p: float
    reached: bool

    def report(self) -> dict:
        return {
            "retained": int(self.indices.size),
            "retained_mass": self.retained_mass,
            "tail_bound": self.tail_bound,
            "eps": self.eps,
            "reached": self.reached,
        }


def _contributions(r: Measure, p: float) -> np.ndarray:
    m = r.mass
    return r.space.from_base() ** p * np.sqrt(m * (1.0 - m))


def tail_bound(r: Measure, indices, p: float = 1.0) -> float:
    """Star-tree tail bound of the points outside ``indices``."""
    c = _contributions(r, p)
    keep = np.zeros(c.size, dtype=bool)
    keep[np.asarray(indices, dtype=np.int64)] = True
    return float(c[~keep].sum())


def truncate(r: Measure, eps: float | None = None, p: float = 1.0, max_points: int | None = None) -> TruncationPlan:
    """Greedy truncation of a large support.

    Points enter in order of decreasing ``d(x, x0)**p sqrt(r_x (1 - r_x))``
    (ties by index) until the remaining tail bound is at most ``eps``.  The
    base point is always retained.

    Parameters
    ----------
    r : Measure
    eps : float, optional
        Tail budget.  Defaults to ``1e-3 * sum_x d(x, x0)**p r_x``.
        ``eps = 0`` keeps the whole support.
    p : float
    max_points : int, optional
        Cap on ``|I|``; if the budget needs more points the plan is
        returned with ``reached = False``.
    """
    if eps is None:
        eps = 1e-3 * float(r.space.from_base() ** p @ r.mass)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    x0 = r.space.base_point_index
    c = _contributions(r, p)
    order = np.argsort(-c, kind="stable")
    order = order[order != x0]
    cs = c[order]
    # suffix sums: tail[k] = bound after keeping the first k of ``order``
    tail = np.concatenate([np.cumsum(cs[::-1])[::-1], [0.0]])
    if eps == 0:
        k = int(np.count_nonzero(cs > 0))
        extra = np.flatnonzero(r.mass > 0)
        chosen = np.union1d(order[:k], extra)
    else:
        k = int(np.argmax(tail <= eps))
        chosen = order[:k]
    reached = True
    if max_points is not None and chosen.size + 1 > max_points:
        chosen = order[: max(max_points - 1, 0)]
        reached = False
    idx = np.union1d(chosen, [x0]).astype(np.int64)
    bound = tail_bound(r, idx, p)
    return TruncationPlan(idx, float(r.mass[idx].sum()), bound, float(eps), float(p), reached)


def restrict(r: Measure, plan: TruncationPlan):
    """Restrict ``r`` to the retained points, folding lost mass into ``x0``.

    Returns
    -------
    space : MetricSpace
        Subspace on ``plan.indices`` (base point preserved).
    measure : Measure
    """
    sub = r.space.subspace(plan.indices)
    mass = r.mass[plan.indices].copy()
    mass[sub.base_point_index] += 1.0 - mass.sum()
    mass = np.maximum(mass, 0.0)
    return sub, Measure(sub, mass / mass.sum())


def _chunks(start: int, M: int, size: int):
    return [range(a, min(a + size, start + M)) for a in range(start, start + M, size)]


def _threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("OTLIMITS_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def _run_chunks(fn, chunks, threads: int) -> np.ndarray:
    if threads == 1 or len(chunks) == 1:
        parts = [fn(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, chunks))
    return np.concatenate(parts) if parts else np.zeros(0)


def limit_draws(structure, r, p: float, M: int, method: str, seed: int, threads: int | None = 1, start: int = 0) -> np.ndarray:
    """Unsorted null-limit draws for replicates ``start .. start + M - 1``.

    Parameters
    ----------
    structure : MetricSpace, ThresholdedMetric, WeightedTree or GridSpace
        ``exact`` accepts a space, a thresholded metric or a tree (its path
        metric); ``tree`` accepts a tree, or a space from which a minimum
        spanning tree is built; ``grid`` needs a :class:`GridSpace`.
    r : Measure or array_like
        Probability vector feeding ``Sigma(r)``.
    p : float
    M : int
    method : {"exact", "tree", "grid"}
    seed : int
    threads : int, optional
        Worker threads; ``None`` reads ``OTLIMITS_THREADS`` or uses all cores.

    Returns
    -------
    ndarray of shape (M,)
        Replicate ``start + k`` in position ``k``.
    """
    method = normalize_method(method)
    _check_p(p)
    mass = np.asarray(getattr(r, "mass", r), dtype=float)
    n = mass.size
    if method == "exact":
        if isinstance(structure, WeightedTree):
            structure = structure.as_space()
        if not isinstance(structure, (MetricSpace, ThresholdedMetric)):
            raise ValueError("method exact needs a metric space or thresholded metric")
        network = LimitFlowNetwork(structure, p)
        network.problem._residual()

        def stat(G):
            return np.array([network.value(g) for g in G]) ** (1.0 / p)

    elif method == "tree":
        tree = structure
        if isinstance(structure, (MetricSpace, ThresholdedMetric)) and not isinstance(structure, WeightedTree):
            base = structure.base if isinstance(structure, ThresholdedMetric) else structure
            tree = spanning_tree(base, "mst")
        if not isinstance(tree, WeightedTree):
            raise ValueError("method tree needs a tree or a metric space")

        def stat(G):
            return np.atleast_1d(z_statistic(tree, G, p))

    else:
        grid = structure.base if isinstance(structure, ThresholdedMetric) else structure
        if not isinstance(grid, GridSpace):
            raise ValueError("method grid needs a GridSpace")

        def stat(G):
            return np.atleast_1d(grid_bound_statistic(grid, G, p))

    size = len(structure.base) if isinstance(structure, ThresholdedMetric) else len(structure)
    if method == "tree":
        size = len(tree)
    elif method == "grid":
        size = grid.n_points
    if size != n:
        raise ValueError("measure has %d entries, structure has %d points" % (n, size))
    chunk = max(1, min(256, (1 << 22) // max(n, 1)))

    def work(reps):
        return stat(gaussian_draws(mass, seed, reps))

    return _run_chunks(work, _chunks(start, M, chunk), _threads(threads))


def simulate_null_limit(
    structure,
    r,
    p: float = 1.0,
    M: int = DEFAULT_M,
    method: str = "exact",
    seed: int = 0,
    threads: int | None = 1,
    scaling: str = "n^(1/2p)",
    truncation: TruncationPlan | None = None,
) -> LimitSample:
    """Sample the null limit ``{max_{lam in S*} <G, lam>}**(1/p)`` or a tree bound.

    Parameters
    ----------
    structure, r, p, M, method, seed, threads
        See :func:`limit_draws`.
    scaling : str
        Descriptor stored with the sample.
    truncation : TruncationPlan, optional
        Restrict ``r`` (a :class:`Measure` on ``structure``) to the plan's
        points before sampling; the report is kept in the sample.

    Raises
    ------
    ValueError
        Unknown method, or a structure the method cannot use.
    """
    method = normalize_method(method)
    report = None
    if truncation is not None:
        if not isinstance(r, Measure):
            raise ValueError("truncation needs r as a Measure")
        structure, r = restrict(r, truncation)
        report = truncation.report()
    draws = limit_draws(structure, r, p, M, method, seed, threads)
    return LimitSample(draws, _KINDS[method], float(p), scaling, int(seed), report)


def simulate_alt_limit(
    metric: MetricSpace,
    r,
    s,
    p: float = 1.0,
    alpha: float = 1.0,
    M: int = DEFAULT_M,
    seed: int = 0,
    threads: int | None = 1,
) -> LimitSample:
    """Sample the limit of the centred statistic when ``r != s``.

    Each draw is ``(1/p) W_p(r, s)**(1 - p)`` times the maximum of
    ``sqrt(alpha) <G, lam> + sqrt(1 - alpha) <H, mu>`` over the optimal dual
    face, with ``G ~ N(0, Sigma(r))`` and ``H ~ N(0, Sigma(s))`` drawn from
    the same replicate stream.  ``alpha = 1`` gives the one-sample law of
    ``sqrt(n) (W_p(r_n, s) - W_p(r, s))`` and never draws ``H``.

    Raises
    ------
    ValueError
        If ``W_p(r, s) = 0``.
    """
    _check_p(p)
    if isinstance(metric, ThresholdedMetric):
        metric = metric.as_space()
    result = wasserstein(metric, r, s, p)
    if not result.value > 0:
        raise ValueError("the alternative limit needs r != s")
    face = DualFaceNetwork(metric, r, s, p, result)
    factor = result.value ** (1.0 - p) / p
    rm = np.asarray(getattr(r, "mass", r), dtype=float)
    sm = np.asarray(getattr(s, "mass", s), dtype=float)
    one_sample = alpha == 1.0

    def work(reps):
        if one_sample:
            G = gaussian_draws(rm, seed, reps)
            return np.array([face.value(g) for g in G])
        G, H = gaussian_draws(rm, seed, reps, second=sm)
        return np.array([face.value(g, h, alpha) for g, h in zip(G, H)])

    draws = factor * _run_chunks(work, _chunks(0, M, 256), _threads(threads))
    scaling = "sqrt(n)" if one_sample else "rho_nm"
    meta = {"alpha": alpha, "W": result.value}
    return LimitSample(draws, "alt_dual_face", float(p), scaling, int(seed), None, meta)


def quantile(sample, q: float) -> float:
    """Type-1 quantile: the ``ceil(q M)``-th smallest draw.

    Raises
    ------
    ValueError
        ``q`` outside (0, 1) or fewer than 100 draws.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    draws = sample.draws if isinstance(sample, LimitSample) else np.sort(np.asarray(sample, dtype=float))
    M = draws.size
    if M < 100:
        raise ValueError("quantiles need at least 100 draws, got %d" % M)
    k = math.ceil(q * M - 1e-9)
    return float(draws[max(k, 1) - 1])


def p_value(sample, statistic: float) -> float:
    """Monte Carlo p-value ``(1 + #{draws >= statistic}) / (M + 1)``."""
    draws = sample.draws if isinstance(sample, LimitSample) else np.sort(np.asarray(sample, dtype=float))
    M = draws.size
    exceed = M - int(np.searchsorted(draws, statistic, side="left"))
    return (1.0 + exceed) / (M + 1.0)
