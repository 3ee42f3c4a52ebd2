"""Command-line front end: ``otlimits <command> [options]``.

Every command writes one JSON document (to ``-o`` or stdout).  Failures
exit with status 2 and a JSON error object on stderr.  Stochastic
commands require ``--seed``; the same arguments and seed give
byte-identical JSON unless ``--timings`` is set.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import __version__
from .io import (
    ingest_image,
    read_matrix_csv,
    read_measure_csv,
    read_points_csv,
    read_sample,
    read_tree_csv,
    read_vector_csv,
    write_dimacs,
    write_dual_csv,
    write_measure_csv,
    write_plan_csv,
)
from .limits import DEFAULT_M, simulate_null_limit
from .measures import Measure, empirical_measure
from .solver import FlowProblem, wasserstein
from .space import GridSpace, bin_cdf, threshold_metric
from .testing import DEFAULT_ALPHA, one_sample_test, threshold_sweep, two_sample_test
from .tree import grid_bound_statistic

STOCHASTIC = {"limit-sim", "test", "sweep"}
# Above this many support pairs ``dist`` only reports the thresholded value.
FULL_SOLVE_PAIRS = 4_000_000


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    """Parsed command line."""

    command: str
    p: float = 1.0
    t: float | None = None
    M: int = DEFAULT_M
    seed: int | None = None
    method: str | None = None
    alpha: float = DEFAULT_ALPHA
    threads: int | None = None
    output: str | None = None
    timings: bool = False
    inputs: dict = field(default_factory=dict)

    @classmethod
    def from_namespace(cls, ns: argparse.Namespace) -> "RunConfig":
        d = dict(vars(ns))
        keys = ("command", "p", "t", "M", "seed", "method", "alpha", "threads", "output", "timings")
        return cls(**{k: d.pop(k) for k in keys}, inputs=d)


def _real(text: str) -> float:
    """Parse ``0.5``, ``6/256`` and the like."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError("not a number: %r" % text) from None


def _real_list(text: str) -> list[float]:
    return [_real(v) for v in text.split(",") if v.strip()]


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--p", type=_real, default=1.0, help="cost exponent (default 1)")
    common.add_argument("--t", type=_real, default=None, help="threshold for d_t = min(d, t)")
    common.add_argument("--M", type=int, default=DEFAULT_M, help="Monte Carlo draws (default %d)" % DEFAULT_M)
    common.add_argument("--seed", type=_seed, default=None, help="master seed (required for stochastic commands)")
    common.add_argument("--method", choices=["exact", "tree", "grid", "bound"], default=None)
    common.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="test level (default 0.05)")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default OTLIMITS_THREADS or all cores)")
    common.add_argument("-o", "--output", default=None, help="JSON output path (default stdout)")
    common.add_argument("--timings", action="store_true", help="include wall times in reports")

    space = argparse.ArgumentParser(add_help=False)
    g = space.add_argument_group("space")
    g.add_argument("--points", help="CSV id,x1,...,xD[,mass]")
    g.add_argument("--matrix", help="dense CSV distance matrix")
    g.add_argument("--base-point", type=int, default=0, help="index of x0")

    parser = argparse.ArgumentParser(prog="otlimits", description="Empirical Wasserstein distances, their limit laws and tests.")
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dist", parents=[common, space], help="W_p between two measures or images")
    p.add_argument("--r", help="measure CSV id,mass")
    p.add_argument("--s", help="measure CSV id,mass")
    p.add_argument("--image-x")
    p.add_argument("--image-y")
    p.add_argument("--plan", help="write the optimal plan as CSV")
    p.add_argument("--dual", help="write the dual potentials as CSV")
    p.add_argument("--dimacs", help="write the transport instance in DIMACS min format")

    p = sub.add_parser("limit-sim", parents=[common, space], help="sample a null limit law")
    p.add_argument("--r", help="measure CSV id,mass (default: mass column of --points)")
    p.add_argument("--tree", help="tree CSV node,parent,weight (method tree)")
    p.add_argument("--image-x", help="image whose normalised counts give r")
    p.add_argument("--draws", help="draws CSV path (default next to -o)")

    p = sub.add_parser("test", parents=[common, space], help="one- or two-sample test")
    p.add_argument("--r0", help="hypothesised measure CSV (one-sample test)")
    p.add_argument("--sample-x", help="file of point ids, one per line")
    p.add_argument("--sample-y", help="file of point ids, one per line")
    p.add_argument("--image-x")
    p.add_argument("--image-y")
    p.add_argument("--tree", help="tree CSV for method tree")

    p = sub.add_parser("sweep", parents=[common, space], help="two-sample tests over thresholds")
    p.add_argument("--t-list", type=_real_list, required=True, help="comma list, fractions allowed (2/256,3/256,...)")
    p.add_argument("--sample-x")
    p.add_argument("--sample-y")
    p.add_argument("--image-x")
    p.add_argument("--image-y")
    p.add_argument("--csv", help="write t,statistic,p_value rows here (default next to -o)")

    p = sub.add_parser("grid-bound", parents=[common], help="dyadic grid statistic of a signed vector")
    p.add_argument("--u", required=True, help="CSV matrix (D=2) or single row/column (D=1)")
    p.add_argument("--D", type=int, default=None, help="grid dimension (default from the file shape)")

    p = sub.add_parser("bin", parents=[common], help="discretise a scipy.stats distribution")
    p.add_argument("--dist", default="norm", help="scipy.stats distribution name")
    p.add_argument("--params", default="", help="shape/loc/scale as key=value,... (e.g. loc=0,scale=1)")
    p.add_argument("--bins-per-unit", type=int, required=True)
    p.add_argument("--k-min", type=int, required=True)
    p.add_argument("--k-max", type=int, required=True)
    p.add_argument("--measure-out", help="write the binned measure as CSV")
    return parser


def _space(args):
    if args.points and args.matrix:
        raise UsageError("give only one of --points and --matrix")
    if args.points:
        return read_points_csv(args.points, base_point=args.base_point)
    if args.matrix:
        return read_matrix_csv(args.matrix, base_point=args.base_point), None
    return None, None


def _image_pair(args):
    gx, x = ingest_image(args.image_x)
    gy, y = ingest_image(args.image_y)
    if gx.L != gy.L:
        raise UsageError("images have different sizes")
    return gx, x, Measure(gx, y.mass, n=y.n)


def _metric(space, t):
    return space if t is None else threshold_metric(space, t)


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _sidecar(output, suffix):
    if output is None:
        return None
    return os.path.splitext(output)[0] + suffix


def cmd_dist(args):
    if args.image_x or args.image_y:
        if not (args.image_x and args.image_y):
            raise UsageError("dist needs both --image-x and --image-y")
        space, r, s = _image_pair(args)
    else:
        space, _ = _space(args)
        if space is None or not (args.r and args.s):
            raise UsageError("dist needs a space (--points or --matrix) with --r and --s, or two images")
        r = read_measure_csv(args.r, space)
        s = read_measure_csv(args.s, space)
    out = {"p": args.p, "n_points": len(space)}
    n_pairs = np.count_nonzero(r.mass) * np.count_nonzero(s.mass)
    if n_pairs <= FULL_SOLVE_PAIRS:
        res = wasserstein(space, r, s, args.p)
        out["W"] = res.value
        out["cost"] = res.cost
        if args.plan:
            write_plan_csv(res.plan, space, args.plan)
        if args.dual:
            write_dual_csv(res.dual, space, args.dual)
    elif args.t is None:
        raise UsageError("supports too large for a full solve (%d pairs); pass --t" % n_pairs)
    if args.dimacs:
        rows, cols = np.flatnonzero(r.mass), np.flatnonzero(s.mass)
        C = space.pairwise(rows, cols) ** args.p
        tail = np.repeat(np.arange(rows.size), cols.size)
        head = rows.size + np.tile(np.arange(cols.size), rows.size)
        prob = FlowProblem(rows.size + cols.size, tail, head, C.ravel(), np.concatenate([r.mass[rows], -s.mass[cols]]))
        write_dimacs(prob, args.dimacs, comment="transport instance, p=%r" % args.p)
    if args.t is not None:
        out["t"] = args.t
        out["W_t"] = wasserstein(threshold_metric(space, args.t), r, s, args.p).value
    return out


def _null_measure(args, space, mass):
    if args.r:
        return read_measure_csv(args.r, space)
    if mass is not None:
        return Measure.from_weights(space, mass)
    raise UsageError("limit-sim needs --r or a mass column in --points")


def cmd_limit_sim(args):
    method = args.method or "exact"
    if args.image_x:
        grid, r = ingest_image(args.image_x)
        structure = grid if args.t is None else threshold_metric(grid, args.t)
        if method == "tree":
            raise UsageError("use method grid (or exact) for images")
    elif args.tree:
        structure = read_tree_csv(args.tree)
        r = _null_measure(args, structure.as_space(), None)
    else:
        space, mass = _space(args)
        if space is None:
            raise UsageError("limit-sim needs --points, --matrix, --tree or --image-x")
        r = _null_measure(args, space, mass)
        structure = _metric(space, args.t)
    if method == "bound":
        method = "grid" if isinstance(structure, GridSpace) else "tree"
    sample = simulate_null_limit(structure, r, args.p, args.M, method, args.seed, args.threads)
    draws_path = args.draws or _sidecar(args.output, "_draws.csv")
    doc = sample.to_dict(draws_path and os.path.basename(draws_path))
    if args.output:
        sample.save(args.output, draws_path)
        with open(args.output) as fh:
            doc = json.load(fh)
    else:
        doc["draws"] = [float(v) for v in sample.draws]
    doc["quantiles"] = {str(q): sample.quantile(q) for q in (0.5, 0.9, 0.95, 0.99)} if sample.M >= 100 else {}
    return doc


def _samples(args, space, which):
    path = getattr(args, which)
    if path is None:
        return None
    return empirical_measure(space, read_sample(path))


def cmd_test(args):
    if args.image_x or args.image_y:
        if not (args.image_x and args.image_y):
            raise UsageError("test needs both --image-x and --image-y")
        space, x, y = _image_pair(args)
        method = args.method or "grid"
        rep = two_sample_test(_metric(space, args.t), x, y, args.p, method, args.M, args.seed, args.alpha, args.threads)
        return rep.to_dict(args.timings)
    space, _ = _space(args)
    if space is None:
        raise UsageError("test needs a space or two images")
    tree = read_tree_csv(args.tree) if args.tree else None
    method = args.method or "exact"
    x = _samples(args, space, "sample_x")
    if x is None:
        raise UsageError("test needs --sample-x")
    metric = _metric(space, args.t)
    if args.r0:
        if args.sample_y:
            raise UsageError("give --r0 (one-sample) or --sample-y (two-sample), not both")
        r0 = read_measure_csv(args.r0, space)
        rep = one_sample_test(metric, r0, x, args.p, method, args.M, args.seed, args.alpha, args.threads, tree)
    else:
        y = _samples(args, space, "sample_y")
        if y is None:
            raise UsageError("test needs --r0 or --sample-y")
        rep = two_sample_test(metric, x, y, args.p, method, args.M, args.seed, args.alpha, args.threads, tree)
    return rep.to_dict(args.timings)


def cmd_sweep(args):
    if args.image_x or args.image_y:
        if not (args.image_x and args.image_y):
            raise UsageError("sweep needs both --image-x and --image-y")
        space, x, y = _image_pair(args)
    else:
        space, _ = _space(args)
        if space is None:
            raise UsageError("sweep needs a space or two images")
        x = _samples(args, space, "sample_x")
        y = _samples(args, space, "sample_y")
        if x is None or y is None:
            raise UsageError("sweep needs --sample-x and --sample-y")
    method = args.method or "bound"
    reports = threshold_sweep(space, x, y, args.p, args.t_list, method, args.M, args.seed, args.alpha, args.threads)
    csv_path = args.csv or _sidecar(args.output, "_sweep.csv")
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "statistic", "p_value", "reject"])
            for rep in reports:
                w.writerow([repr(rep.t), repr(rep.statistic), repr(rep.p_value), int(rep.reject)])
    return {"reports": [rep.to_dict(args.timings) for rep in reports]}


def cmd_grid_bound(args):
    raw = np.loadtxt(args.u, delimiter=",", ndmin=2)
    D = args.D
    if D is None:
        D = 1 if 1 in raw.shape else 2
    u = read_vector_csv(args.u)
    L = round(u.size ** (1.0 / D))
    if L**D != u.size:
        raise UsageError("vector of length %d is not an L^%d grid" % (u.size, D))
    grid = GridSpace(D, L)
    return {"D": D, "L": L, "p": args.p, "value": grid_bound_statistic(grid, u, args.p), "sum": float(u.sum())}


def cmd_bin(args):
    from scipy import stats

    try:
        dist = getattr(stats, args.dist)
    except AttributeError:
        raise UsageError("unknown distribution %r" % args.dist) from None
    kw = {}
    for item in filter(None, args.params.split(",")):
        key, _, val = item.partition("=")
        kw[key.strip()] = _real(val)
    frozen = dist(**kw)
    measure, (left, right) = bin_cdf(frozen.cdf, args.bins_per_unit, args.k_min, args.k_max)
    if args.measure_out:
        write_measure_csv(measure, args.measure_out)
    return {
        "dist": args.dist,
        "params": kw,
        "bins_per_unit": args.bins_per_unit,
        "k_min": args.k_min,
        "k_max": args.k_max,
        "residual_left": left,
        "residual_right": right,
        "total": measure.total(),
        "measure_path": args.measure_out,
    }


COMMANDS = {
    "dist": cmd_dist,
    "limit-sim": cmd_limit_sim,
    "test": cmd_test,
    "sweep": cmd_sweep,
    "grid-bound": cmd_grid_bound,
    "bin": cmd_bin,
}


def run(config: RunConfig) -> int:
    """Execute a command; returns the exit status (errors propagate)."""
    if config.command in STOCHASTIC and config.seed is None:
        raise UsageError("--seed is required for %s" % config.command)
    threads = config.threads
    if threads is None and os.environ.get("OTLIMITS_THREADS"):
        threads = int(os.environ["OTLIMITS_THREADS"])
    args = argparse.Namespace(**config.inputs)
    args.__dict__.update(
        command=config.command, p=config.p, t=config.t, M=config.M, seed=config.seed, method=config.method,
        alpha=config.alpha, threads=threads, output=config.output, timings=config.timings,
    )
    result = COMMANDS[config.command](args)
    _write_json(result, config.output)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(RunConfig.from_namespace(args))
    except Exception as exc:  # reported as JSON for machine consumers
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
