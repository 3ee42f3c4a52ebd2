"""Measures on finite metric spaces and the multinomial Gaussian limit.

Replicate ``j`` of a Monte Carlo run with master seed ``s`` draws from the
PCG64 stream seeded by ``SeedSequence(s, spawn_key=(j,))``, so any subset of
replicates can be regenerated, in any order and on any thread.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .space import MetricSpace

__all__ = [
    "Measure",
    "GaussianDraw",
    "empirical_measure",
    "covariance_matrix",
    "sample_gaussian",
    "gaussian_draws",
    "replicate_rng",
    "jordan_decompose",
]

PROB_TOL = 1e-12
BALANCE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Measure:
    """A mass vector on a :class:`MetricSpace`.

    Parameters
    ----------
    space : MetricSpace
    mass : array_like of shape (N,)
    kind : {"probability", "signed"}
    n : int, optional
        Sample size when the measure is empirical.
    """

    space: MetricSpace
    mass: np.ndarray
    kind: str = "probability"
    n: int | None = None

    def __post_init__(self):
        mass = np.array(self.mass, dtype=float)
        if mass.shape != (len(self.space),):
            raise ValueError("mass has shape %s, space has %d points" % (mass.shape, len(self.space)))
        if not np.all(np.isfinite(mass)):
            raise ValueError("mass has non-finite entries")
        if self.kind == "probability":
            if np.any(mass < 0):
                raise ValueError("probability mass has negative entries")
            total = mass.sum()
            if abs(total - 1.0) > PROB_TOL:
                raise ValueError("probability mass sums to %.17g" % total)
        elif self.kind != "signed":
            raise ValueError("unknown measure kind %r" % self.kind)
        mass.flags.writeable = False
        object.__setattr__(self, "mass", mass)

    def __len__(self) -> int:
        return self.mass.size

    @classmethod
    def from_weights(cls, space: MetricSpace, weights) -> "Measure":
        """Normalise nonnegative weights to a probability measure."""
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("negative weights")
        total = w.sum()
        if not total > 0:
            raise ValueError("weights sum to zero")
        return cls(space, w / total)

    @classmethod
    def from_counts(cls, space: MetricSpace, counts) -> "Measure":
        """Empirical measure from per-point counts."""
        c = np.asarray(counts)
        if np.any(c < 0):
            raise ValueError("negative counts")
        if not np.all(c == np.round(c)):
            raise ValueError("counts must be integers")
        n = int(round(float(c.sum())))
        if n == 0:
            raise ValueError("empty sample")
        return cls(space, c / n, n=n)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.mass)

    def total(self) -> float:
        return float(self.mass.sum())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "ids": list(self.space.ids),
            "mass": [float(v) for v in self.mass],
        }


@dataclass(frozen=True, eq=False)
class GaussianDraw:
    """One draw of ``G ~ N(0, Sigma(r))`` with its RNG lineage."""

    values: np.ndarray
    seed_path: str = field(default="")

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


def _mass(r) -> np.ndarray:
    return np.asarray(getattr(r, "mass", r), dtype=float)


def empirical_measure(space: MetricSpace, sample) -> Measure:
    """Empirical measure of a sample of point ids.

    Parameters
    ----------
    space : MetricSpace
    sample : sequence
        Point ids (matched against ``space.ids`` as strings) or, if integer
        typed, point indices.

    Raises
    ------
    KeyError
        Unknown id.
    ValueError
        Empty sample.
    """
    arr = np.asarray(sample)
    if arr.size == 0:
        raise ValueError("empty sample")
    if np.issubdtype(arr.dtype, np.integer):
        if arr.min() < 0 or arr.max() >= len(space):
            raise KeyError("point index out of range")
        idx = arr
    else:
        idx = space.index_of(arr.tolist())
    counts = np.bincount(idx, minlength=len(space))
    return Measure(space, counts / arr.size, n=int(arr.size))


def covariance_matrix(r) -> np.ndarray:
    """Multinomial covariance ``diag(r) - r r^T``."""
    m = _mass(r)
    return np.diag(m) - np.outer(m, m)


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent generator for replicate ``replicate`` of master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate),))
    return np.random.Generator(np.random.PCG64(ss))


def _gaussian_from_normals(r: np.ndarray, z: np.ndarray) -> np.ndarray:
    root = np.sqrt(r)
    return root * z - np.multiply.outer(z @ root, r)


def sample_gaussian(r, rng: np.random.Generator, seed_path: str = "") -> GaussianDraw:
    """Draw ``G ~ N(0, Sigma(r))`` as ``sqrt(r) * Z - r <sqrt(r), Z>``.

    The construction has covariance ``diag(r) - r r^T`` and sums to zero up
    to rounding whenever ``r`` sums to one.
    """
    m = _mass(r)
    z = rng.standard_normal(m.size)
    return GaussianDraw(_gaussian_from_normals(m, z), seed_path)


def gaussian_draws(r, seed: int, replicates, second=None) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Stack of draws for the given replicate indices, one stream each.

    Parameters
    ----------
    r : Measure or array_like
    seed : int
        Master seed.
    replicates : iterable of int
    second : Measure or array_like, optional
        If given, each replicate also draws ``H ~ N(0, Sigma(second))`` from
        the same stream, after ``G``.

    Returns
    -------
    G : ndarray of shape (len(replicates), N)
    H : ndarray, only when ``second`` is given
    """
    m = _mass(r)
    reps = list(replicates)
    z = np.empty((len(reps), m.size))
    m2 = None if second is None else _mass(second)
    z2 = None if m2 is None else np.empty((len(reps), m2.size))
    for k, j in enumerate(reps):
        rng = replicate_rng(seed, j)
        z[k] = rng.standard_normal(m.size)
        if z2 is not None:
            z2[k] = rng.standard_normal(m2.size)
    G = _gaussian_from_normals(m, z)
    if z2 is None:
        return G
    return G, _gaussian_from_normals(m2, z2)


def jordan_decompose(g, tol: float = BALANCE_TOL):
    """Split a balanced signed vector into positive and negative parts.

    Returns
    -------
    plus, minus : Measure
        Signed-kind measures with nonnegative entries, ``plus - minus == g``.
        A :class:`Measure` needs a space; when ``g`` is a plain array the
        parts are returned as arrays.

    Raises
    ------
    ValueError
        If the entries of ``g`` do not sum to zero within ``tol`` (relative
        to the total variation when that exceeds one).
    """
    space = getattr(g, "space", None)
    v = np.asarray(getattr(g, "values", getattr(g, "mass", g)), dtype=float)
    scale = max(1.0, float(np.abs(v).sum()))
    if abs(v.sum()) > tol * scale:
        raise ValueError("draw is unbalanced: sum = %.3g" % v.sum())
    plus = np.maximum(v, 0.0)
    minus = np.maximum(-v, 0.0)
    if space is None:
        return plus, minus
    return Measure(space, plus, kind="signed"), Measure(space, minus, kind="signed")
