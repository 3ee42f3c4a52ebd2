"""File formats: points, matrices, measures, samples, images, trees, plans.

Floats are written with ``repr``, which round-trips 64-bit values exactly.
"""

from __future__ import annotations

import csv
import warnings

import numpy as np

from .measures import Measure
from .solver import DualPair, FlowProblem, TransportPlan
from .space import GridSpace, MetricSpace, build_space
from .tree import WeightedTree

__all__ = [
    "read_points_csv",
    "write_points_csv",
    "read_matrix_csv",
    "read_measure_csv",
    "write_measure_csv",
    "read_sample",
    "read_image",
    "write_pgm",
    "image_to_measure",
    "ingest_image",
    "read_tree_csv",
    "write_tree_csv",
    "write_plan_csv",
    "write_dual_csv",
    "write_dimacs",
    "read_vector_csv",
]


def _rows(path):
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh) if row and not row[0].startswith("#")]


def read_points_csv(path, base_point: int = 0):
    """Read ``id,x1,...,xD[,mass]`` (header required).

    Returns
    -------
    space : MetricSpace
    mass : ndarray or None
        The ``mass`` column when present (not normalised).
    """
    rows = _rows(path)
    if not rows:
        raise ValueError("%s is empty" % path)
    header = [h.strip().lower() for h in rows[0]]
    if header[0] != "id":
        raise ValueError("points file must start with an 'id' column")
    has_mass = header[-1] == "mass"
    ncoord = len(header) - 1 - int(has_mass)
    if ncoord < 1:
        raise ValueError("points file has no coordinate columns")
    ids = [r[0].strip() for r in rows[1:]]
    coords = np.array([[float(v) for v in r[1 : 1 + ncoord]] for r in rows[1:]])
    mass = np.array([float(r[-1]) for r in rows[1:]]) if has_mass else None
    return build_space(ids, coords=coords, base_point=base_point), mass


def write_points_csv(space: MetricSpace, path, mass=None) -> None:
    if space.coords is None:
        raise ValueError("space has no coordinates")
    D = space.coords.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + ["x%d" % (k + 1) for k in range(D)] + (["mass"] if mass is not None else []))
        for i, pid in enumerate(space.ids):
            row = [pid] + [repr(float(v)) for v in space.coords[i]]
            if mass is not None:
                row.append(repr(float(mass[i])))
            w.writerow(row)


def read_matrix_csv(path, ids=None, base_point: int = 0) -> MetricSpace:
    """Dense CSV distance matrix (no header)."""
    m = np.loadtxt(path, delimiter=",", ndmin=2)
    return build_space(ids, matrix=m, base_point=base_point)


def read_measure_csv(path, space: MetricSpace, kind: str = "probability") -> Measure:
    """Read ``id,mass`` rows; ids missing from the file get zero mass."""
    rows = _rows(path)
    if rows and rows[0][0].strip().lower() == "id":
        rows = rows[1:]
    mass = np.zeros(len(space))
    idx = space.index_of([r[0].strip() for r in rows])
    mass[idx] = [float(r[1]) for r in rows]
    return Measure(space, mass, kind=kind)


def write_measure_csv(measure: Measure, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "mass"])
        for pid, v in zip(measure.space.ids, measure.mass):
            w.writerow([pid, repr(float(v))])


def read_vector_csv(path) -> np.ndarray:
    """All numbers of a CSV file, flattened in row order."""
    return np.loadtxt(path, delimiter=",", ndmin=2).ravel()


def read_sample(path) -> list[str]:
    """One point id per line; an optional ``id`` header is skipped."""
    rows = _rows(path)
    if rows and rows[0][0].strip().lower() == "id":
        rows = rows[1:]
    return [r[0].strip() for r in rows]


def _pgm_tokens(data: bytes):
    """Header tokens of a PGM file and the offset just past the header."""
    tokens = []
    i = 0
    while len(tokens) < 4:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise ValueError("truncated PGM header")
        tokens.append(data[i:j].decode("ascii"))
        i = j
    return tokens, i + 1


def read_image(path) -> np.ndarray:
    """Counts from a PGM (P2 or P5) file or a CSV matrix."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] in (b"P2", b"P5"):
        (magic, w, h, maxval), start = _pgm_tokens(data)
        w, h, maxval = int(w), int(h), int(maxval)
        if magic == "P2":
            body = data[start:].decode("ascii")
            body = "\n".join(ln.split("#")[0] for ln in body.splitlines())
            vals = np.array(body.split(), dtype=np.int64)
        else:
            dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
            vals = np.frombuffer(data, dtype=dtype, count=w * h, offset=start).astype(np.int64)
        if vals.size != w * h:
            raise ValueError("PGM body has %d values, expected %d" % (vals.size, w * h))
        return vals.reshape(h, w)
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_pgm(counts, path, binary: bool = False) -> None:
    """Write nonnegative integer counts as PGM (P2 text or P5 binary)."""
    c = np.asarray(counts)
    if c.ndim != 2 or np.any(c < 0) or not np.all(c == np.round(c)):
        raise ValueError("PGM needs a 2-D array of nonnegative integers")
    c = c.astype(np.int64)
    maxval = max(int(c.max()), 1)
    if maxval > 65535:
        raise ValueError("counts exceed the PGM range; use CSV")
    h, w = c.shape
    if binary:
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n%d\n" % (w, h, maxval))
            fh.write(c.astype(dtype).tobytes())
    else:
        with open(path, "w") as fh:
            fh.write("P2\n%d %d\n%d\n" % (w, h, maxval))
            for row in c:
                fh.write(" ".join(str(v) for v in row) + "\n")


def image_to_measure(counts):
    """Grid space and empirical measure of a 2-D count image.

    The image is padded with zero cells (bottom and right) to a square
    whose side is a power of two; a warning is emitted when that happens.
    Pixel ``[i, j]`` becomes grid point ``i * L + j``.

    Returns
    -------
    grid : GridSpace
    measure : Measure
        Normalised counts; ``measure.n`` is the total count.
    """
    c = np.asarray(counts, dtype=float)
    if c.ndim != 2:
        raise ValueError("image must be 2-D")
    if np.any(c < 0):
        raise ValueError("image has negative entries")
    if not c.sum() > 0:
        raise ValueError("image is all zero")
    side = max(c.shape)
    L = 1 << (side - 1).bit_length()
    if c.shape != (L, L):
        warnings.warn("image of shape %s padded to %dx%d with zero cells" % (c.shape, L, L), stacklevel=2)
        padded = np.zeros((L, L))
        padded[: c.shape[0], : c.shape[1]] = c
        c = padded
    grid = GridSpace(2, L)
    total = c.sum()
    if np.all(c == np.round(c)):
        return grid, Measure.from_counts(grid, c.ravel())
    return grid, Measure(grid, c.ravel() / total, n=int(round(total)))


def ingest_image(path):
    """:func:`read_image` followed by :func:`image_to_measure`."""
    return image_to_measure(read_image(path))


def read_tree_csv(path) -> WeightedTree:
    """Rows ``node,parent,weight`` with integer node labels ``0..N-1``."""
    rows = _rows(path)
    if rows and rows[0][0].strip().lower() == "node":
        rows = rows[1:]
    n = len(rows)
    parent = np.empty(n, dtype=np.int64)
    weight = np.empty(n)
    seen = np.zeros(n, dtype=bool)
    for r in rows:
        x = int(r[0])
        if not 0 <= x < n or seen[x]:
            raise ValueError("tree nodes must be 0..N-1, each listed once")
        seen[x] = True
        parent[x] = int(r[1])
        weight[x] = float(r[2])
    return WeightedTree(parent, weight)


def write_tree_csv(tree: WeightedTree, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "parent", "weight"])
        for x, px, wt in tree.to_rows():
            w.writerow([x, px, repr(wt)])


def write_plan_csv(plan: TransportPlan, space: MetricSpace, path) -> None:
    ids = space.ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "target", "mass"])
        for i, j, m in zip(plan.rows, plan.cols, plan.mass):
            w.writerow([ids[i], ids[j], repr(float(m))])


def write_dual_csv(dual: DualPair, space: MetricSpace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "lambda"] + (["mu"] if dual.mu is not None else []))
        for k, pid in enumerate(space.ids):
            row = [pid, repr(float(dual.lam[k]))]
            if dual.mu is not None:
                row.append(repr(float(dual.mu[k])))
            w.writerow(row)


def write_dimacs(problem: FlowProblem, path, supply=None, scale: float | None = None, comment: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(problem.to_dimacs(supply, scale, comment))
