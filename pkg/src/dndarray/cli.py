"""Command-line harness: ``convert``, ``bench`` and ``verify``.

``bench`` prints one JSON object per line::

    {"algo": ..., "ranks": ..., "split": ..., "params": {...},
     "warmup_runs": ..., "timed_runs": ..., "mean_seconds": ..., "std_seconds": ...}

``verify`` runs an algorithm on ``--ranks`` ranks and on a single rank,
prints the deviation and exits 0 only if it is within ``--tol`` and every
inline invariant holds.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Callable, Optional

import numpy as np

from . import cluster, dataio, datasets, moments, pairwise, regression
from .ndcore import DndArray, array
from .transport import LoopbackComm, MpiComm, run_loopback

ALGOS = ("moments", "cdist", "kmeans", "lasso")

DEFAULT_SHAPES = {
    "moments": datasets.CITYSCAPES_SHAPE,
    "cdist": (2000, datasets.SUSY_FEATURES),
    "kmeans": (600, 8),
    "lasso": (4000, datasets.EURAD_FEATURES),
}

# slack allowed on the monotone inertia / objective traces
TRACE_SLACK = 1e-9


class UsageError(Exception):
    pass


def _shape(text: str):
    try:
        rows, cols = text.lower().split("x")
        return int(rows), int(cols)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ROWSxCOLS, got {text!r}") from None


def _split(text: str):
    return None if text.lower() == "none" else int(text)


def _default_ranks() -> int:
    return int(os.environ.get("DND_RANKS", "1"))


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("algo", choices=ALGOS)
    p.add_argument("--ranks", type=int, default=None, help="world size (default: $DND_RANKS or 1)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data", help="DNB file to load")
    src.add_argument("--synthetic", type=_shape, metavar="ROWSxCOLS", help="synthetic data shape")
    src.add_argument("--samples", type=int, help=f"cdist: N x {datasets.SUSY_FEATURES} synthetic rows")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", type=_split, default=0, help="0, 1 or none")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--iters", type=int, default=None, help="k-means iterations (30) / lasso sweeps (20)")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--axis", type=_split, default=None, help="moments axis: none, 0 or 1")
    p.add_argument("--transport", choices=("loopback", "mpi"), default="loopback",
                   help="mpi requires launching under mpiexec")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dnd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("convert", help="convert a CSV file to DNB")
    conv.add_argument("src")
    conv.add_argument("dst")
    conv.add_argument("--dtype", choices=("f64", "f32"), default="f64")
    conv.add_argument("--skip-header", action="store_true")

    bench = sub.add_parser("bench", help="time an algorithm")
    _add_data_flags(bench)
    bench.add_argument("--warmup", type=int, default=1)
    bench.add_argument("--runs", type=int, default=9)
    bench.add_argument("--out", choices=("json",), default="json")

    verify = sub.add_parser("verify", help="compare distributed against single-rank results")
    _add_data_flags(verify)
    verify.add_argument("--tol", type=float, default=1e-10, help="max-norm relative tolerance")
    verify.add_argument("--oracle-tol", type=float, default=1e-6,
                        help="lasso with lambda 0: tolerance against least squares")
    verify.add_argument("--corrupt-combiner", action="store_true", help=argparse.SUPPRESS)
    return parser


# -- data ----------------------------------------------------------------------


def _data_shape(args):
    if args.data:
        shape = dataio.read_header(args.data).extents
        # lasso: the last column is the target and x gains a leading bias column,
        # so x keeps the table's width
        if args.algo == "lasso" and len(shape) != 2:
            raise UsageError(f"lasso needs a 2-d table, got shape {tuple(shape)}")
        return tuple(shape)
    if args.samples is not None:
        return (args.samples, datasets.SUSY_FEATURES)
    return args.synthetic or DEFAULT_SHAPES[args.algo]


def _iters(args) -> int:
    if args.iters is not None:
        return args.iters
    return 30 if args.algo == "kmeans" else 20


def _params(args) -> dict:
    if args.algo == "moments":
        return {"axis": args.axis}
    if args.algo == "cdist":
        return {}
    if args.algo == "kmeans":
        return {"k": args.k, "iters": _iters(args), "seed": args.seed}
    return {"lambda": args.lam, "iters": _iters(args)}


def _validate(args, shape) -> None:
    if args.ranks < 1:
        raise UsageError("--ranks must be positive")
    if args.split is not None and not 0 <= args.split < len(shape):
        raise UsageError(f"--split {args.split} invalid for {len(shape)}-d data")
    if args.algo == "moments":
        if args.axis is not None and not 0 <= args.axis < len(shape):
            raise UsageError(f"--axis {args.axis} invalid for {len(shape)}-d data")
        if int(np.prod(shape)) == 0:
            raise UsageError("moments of empty data")
        return
    if len(shape) != 2:
        raise UsageError(f"{args.algo} needs 2-d data, got shape {shape}")
    if shape[0] < 1:
        raise UsageError(f"{args.algo} needs at least one row")
    if args.algo == "kmeans" and not 1 <= args.k <= shape[0]:
        raise UsageError(f"--k {args.k} must lie in [1, {shape[0]}]")
    if args.algo == "lasso" and args.lam < 0:
        raise UsageError("--lambda must be non-negative")
    if args.algo in ("kmeans", "lasso") and _iters(args) < 1:
        raise UsageError("--iters must be positive")


def _load(args, comm):
    """Rank-local handles to the input data (a pair for lasso)."""
    shape = _data_shape(args)
    if args.algo == "lasso":
        if args.data:
            table = dataio.load(args.data, split=0, comm=comm)
            tile = table.larray
            x_tile = np.hstack([np.ones((tile.shape[0], 1)), tile[:, :-1]])
            x = DndArray(x_tile, shape, 0, comm)
            y = DndArray(np.ascontiguousarray(tile[:, -1]), (shape[0],), 0, comm)
        else:
            x, y = datasets.regression(*shape, split=0, seed=args.seed, comm=comm)
        return (x.resplit(args.split), y)
    if args.data:
        return dataio.load(args.data, split=args.split, comm=comm)
    if args.algo == "kmeans":
        return datasets.blobs(*shape, centers=args.k, split=args.split, seed=args.seed, comm=comm)
    return datasets.uniform(shape, split=args.split, seed=args.seed, comm=comm)


def _algorithm(args, combiner: Optional[Callable] = None):
    """Per-rank callable ``data -> raw result`` for the selected algorithm (the timed part)."""
    if args.algo == "moments":
        return lambda a: moments.summary(a, args.axis, combiner=combiner or moments.combine)
    if args.algo == "cdist":
        return pairwise.cdist
    if args.algo == "kmeans":
        def run(a):
            model = cluster.lloyd(a, args.k, _iters(args), 0.0, args.seed)
            return model, cluster.predict(model, a)
        return run
    return lambda data: regression.lasso(data[0], data[1], args.lam, _iters(args))


def _collect(args, raw) -> dict:
    """Gather a raw result into plain arrays for comparison (collective)."""
    if args.algo == "moments":
        return {k: v.numpy() if isinstance(v, DndArray) else np.asarray(v) for k, v in raw.items()}
    if args.algo == "cdist":
        return {"distances": raw.numpy()}
    if args.algo == "kmeans":
        model, labels = raw
        return {"centroids": model.centroids, "labels": labels.numpy(), "trace": model.inertia_trace}
    return {"w": raw.w, "trace": raw.objective_trace}


def _launch(fn, ranks: int, transport: str):
    """Run ``fn(comm)`` on every rank; return rank 0's value (None elsewhere)."""
    if transport == "mpi":
        comm = MpiComm()
        result = fn(comm)
        return result if comm.rank == 0 else None
    return run_loopback(fn, ranks)[0]


# -- subcommands -----------------------------------------------------------------


def cmd_convert(args) -> int:
    rows, cols = dataio.csv_to_dnb(args.src, args.dst, args.dtype, args.skip_header)
    print(json.dumps({"src": args.src, "dst": args.dst, "rows": rows, "cols": cols, "dtype": args.dtype}))
    return 0


def cmd_bench(args) -> int:
    shape = _data_shape(args)
    _validate(args, shape)
    if args.runs < 1 or args.warmup < 0:
        raise UsageError("--runs must be >= 1 and --warmup >= 0")
    algorithm = _algorithm(args)

    def worker(comm):
        data = _load(args, comm)
        times = []
        for _ in range(args.warmup + args.runs):
            comm.barrier()
            start = time.perf_counter()
            algorithm(data)
            comm.barrier()
            times.append(time.perf_counter() - start)
        return times[args.warmup :]

    times = _launch(worker, args.ranks, args.transport)
    if times is None:
        return 0
    timed = array(np.asarray(times), split=None, comm=LoopbackComm.create_world(1)[0])
    report = {
        "algo": args.algo,
        "ranks": args.ranks if args.transport == "loopback" else None,
        "split": args.split,
        "shape": list(shape),
        "params": _params(args),
        "warmup_runs": args.warmup,
        "timed_runs": len(times),
        "mean_seconds": float(moments.mean(timed)),
        "std_seconds": float(moments.std(timed, ddof=1 if len(times) > 1 else 0)),
    }
    print(json.dumps(report), flush=True)
    return 0


def _deviation(got, want):
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    if got.shape != want.shape:
        return np.inf, np.inf
    if got.size == 0:
        return 0.0, 0.0
    abs_dev = float(np.max(np.abs(got - want)))
    scale = float(np.max(np.abs(want)))
    return abs_dev, (abs_dev / scale if scale > 0 else abs_dev)


def _monotone(trace) -> bool:
    return all(b <= a + TRACE_SLACK for a, b in zip(trace, trace[1:]))


def cmd_verify(args) -> int:
    shape = _data_shape(args)
    _validate(args, shape)
    corrupt = _corrupted_combine if args.corrupt_combiner else None
    distributed = _algorithm(args, corrupt)
    reference = _algorithm(args)

    got = _launch(lambda comm: _collect(args, distributed(_load(args, comm))), args.ranks, args.transport)
    if got is None:
        return 0
    want = run_loopback(lambda comm: _collect(args, reference(_load(args, comm))), 1)[0]

    ok = True
    worst_abs = worst_rel = 0.0
    for key, value in want.items():
        if key == "trace":
            continue
        abs_dev, rel_dev = _deviation(got[key], value)
        worst_abs, worst_rel = max(worst_abs, abs_dev), max(worst_rel, rel_dev)
        print(f"{key}: max_abs_dev={abs_dev:.3e} max_rel_dev={rel_dev:.3e}")
    if worst_rel > args.tol:
        print(f"FAIL: relative deviation {worst_rel:.3e} exceeds tol {args.tol:.1e}")
        ok = False

    if "trace" in got:
        for name, trace in (("distributed", got["trace"]), ("single-rank", want["trace"])):
            if not _monotone(trace):
                print(f"FAIL: {name} trace is not nonincreasing")
                ok = False

    if args.algo == "lasso" and args.lam == 0:
        x, y = run_loopback(lambda comm: tuple(v.numpy() for v in _load(args, comm)), 1)[0]
        w_ls = np.linalg.lstsq(x, y, rcond=None)[0]
        dev = float(np.max(np.abs(got["w"] - w_ls)))
        print(f"least-squares oracle: max_abs_dev={dev:.3e}")
        if dev > args.oracle_tol:
            print(f"FAIL: least-squares deviation exceeds {args.oracle_tol:.1e}")
            ok = False

    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _corrupted_combine(a, b):
    # drops the between-group term of the pairwise update; exists for negative tests
    if b.n == 0:
        return a
    if a.n == 0:
        return b
    n = a.n + b.n
    return moments.MomentState(n, a.mean + (b.mean - a.mean) * (b.n / n), a.m2 + b.m2)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "ranks", 0) is None:
        args.ranks = _default_ranks()
    try:
        if args.command == "convert":
            return cmd_convert(args)
        if args.command == "bench":
            return cmd_bench(args)
        return cmd_verify(args)
    except (UsageError, ValueError, OSError) as exc:
        print(f"dnd {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
