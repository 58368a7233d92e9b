"""Command-line driver: insert, kernel, crashtest, recover.

Exit codes: 0 success/PASS, 1 verification or crash-suite failure (or an
engine error), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import analytics, reference
from .bench import run_insert
from .crashsuite import CrashSuiteConfig, run_crash_suite
from .errors import BadParams, IdOverflow, ParseError, PmGraphError, UnknownKernel, UnknownVertex
from .ingest import interleave_deletions, load, rmat, shuffle
from .pm_region import CrashPlan
from .store import ABLATIONS, Graph, GraphConfig

USAGE = 2


class UsageError(Exception):
    pass


def _emit(args, record):
    if args.out:
        with open(args.out, "a") as fh:
            fh.write(json.dumps(record, default=float) + "\n")


def _rmat_spec(text):
    try:
        scale, factor = text.lower().split("x")
        return int(scale), int(factor)
    except ValueError:
        raise UsageError(f"--rmat expects SCALExFACTOR, got {text!r}") from None


def _stream(args):
    if args.rmat and args.input:
        raise UsageError("give either --rmat or --input, not both")
    if args.rmat:
        scale, factor = _rmat_spec(args.rmat)
        s = rmat(scale, factor, seed=args.seed)
        if args.symmetrize:
            from .ingest import EdgeStream

            s = EdgeStream(np.column_stack((s.src, s.dst)).ravel(), np.column_stack((s.dst, s.src)).ravel())
    elif args.input:
        s = load(args.input, symmetrize=args.symmetrize)
    else:
        raise UsageError("need --rmat SCALExFACTOR or --input PATH")
    s = shuffle(s, args.seed)
    if getattr(args, "delete_fraction", 0):
        s = interleave_deletions(s, args.delete_fraction, args.seed + 1)
    return s


def _config(args, stream, threads):
    init_v = args.init_vertices if args.init_vertices is not None else max(1, stream.n_vertices)
    init_e = args.init_edges if args.init_edges is not None else max(1, len(stream) // 10)
    return GraphConfig.ablation(args.ablate, init_vertices=init_v, init_edges=init_e,
                                elog_sz=args.elog_size, ulog_sz=args.ulog_size,
                                concurrent=threads > 1, max_writers=max(16, threads + 1))


def cmd_insert(args):
    stream = _stream(args)
    if args.pmem_file and os.path.exists(args.pmem_file):
        os.remove(args.pmem_file)
    cfg = _config(args, stream, args.threads)
    g, rep, _ = run_insert(stream, threads=args.threads, config=cfg, ablation=args.ablate,
                           warmup=args.warmup, path=args.pmem_file)
    if args.pmem_file:
        g.shutdown()
    print(rep.table())
    _emit(args, {"command": "insert", **rep.to_dict()})
    return 0


def _graph_for_kernel(args):
    if args.pmem_file and os.path.exists(args.pmem_file) and not (args.rmat or args.input):
        g, _ = Graph.open(args.pmem_file, GraphConfig(concurrent=args.threads > 1))
        return g
    stream = _stream(args)
    cfg = _config(args, stream, 1)
    g, _, _ = run_insert(stream, threads=1, config=cfg, warmup=0.0)
    return g


def _verify(name, csr, result, source):
    if name == "pr":
        return float(np.max(np.abs(result - reference.pagerank(csr)))) <= 1e-9
    if name == "bfs":
        return np.array_equal(analytics.depths(result, source), reference.bfs_depths(csr, source))
    if name == "bc":
        return float(np.max(np.abs(result - reference.bc(csr, source)), initial=0.0)) <= 1e-9
    return reference.same_partition(result, reference.components(csr))


def cmd_kernel(args):
    if args.kernel not in analytics.KERNELS:
        raise UnknownKernel(f"unknown kernel {args.kernel!r}; choose from {', '.join(analytics.KERNELS)}")
    g = _graph_for_kernel(args)
    snap = g.consistent_view()
    csr = snap.to_csr()
    if args.kernel in ("bfs", "bc") and not 0 <= args.source < csr.n:
        raise UnknownVertex(args.source)
    times = []
    result = None
    for _ in range(max(1, args.trials)):
        t0 = time.perf_counter()
        result = analytics.run_kernel(args.kernel, csr, args.source, args.threads)
        times.append(time.perf_counter() - t0)
    if args.result:
        analytics.write_result(args.result, result)
    status = 0
    record = {"command": "kernel", "kernel": args.kernel, "threads": args.threads,
              "trials": len(times), "elapsed": min(times), "vertices": csr.n, "edges": csr.m}
    print(f"{args.kernel}: {csr.n} vertices, {csr.m} edges, best of {len(times)}: {min(times):.4f} s")
    if args.verify:
        ok = _verify(args.kernel, csr, result, args.source)
        record["verify"] = "PASS" if ok else "FAIL"
        print(f"verification {record['verify']}")
        status = 0 if ok else 1
    _emit(args, record)
    return status


def cmd_crashtest(args):
    cfg = CrashSuiteConfig(edges=args.edges, seed=args.seed)
    plan = CrashPlan.exhaustive(torn_writes=args.torn, seed=args.seed)
    points = None if args.exhaustive else args.points
    rep = run_crash_suite(cfg, plan, points=points, sample_seed=args.seed)
    print(rep.summary())
    if rep.failures:
        ev, k, why = rep.first_failure
        print(f"first failing point: event {ev} after {k} acknowledged ops: {why}")
    _emit(args, {"command": "crashtest", "mode": rep.mode, "points": rep.points, "passed": rep.passed,
                 "events": rep.events, "rebalances": rep.rebalances, "merges": rep.merges,
                 "resizes": rep.resizes, "first_failure": rep.first_failure})
    return 0 if rep.ok else 1


def cmd_recover(args):
    if not args.pmem_file or not os.path.exists(args.pmem_file):
        raise UsageError("recover needs an existing --pmem-file")
    g, report = Graph.open(args.pmem_file)
    print(report.to_text(), end="")
    if args.stats:
        print(f"edge_array_capacity={g.geom.slots}")
    g.shutdown()
    _emit(args, {"command": "recover", **vars(report)})
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="pmgraph", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sizing=True):
        sp.add_argument("--pmem-file", help="region file (created or reopened)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", help="append JSON-lines records here")
        if sizing:
            sp.add_argument("--rmat", help="SCALExFACTOR synthetic input, e.g. 14x16")
            sp.add_argument("--input", help="SNAP text or DGAPEL01 binary edge list")
            sp.add_argument("--symmetrize", action=argparse.BooleanOptionalAction, default=True)
            sp.add_argument("--init-vertices", type=int)
            sp.add_argument("--init-edges", type=int)
            sp.add_argument("--elog-size", type=int, default=2048)
            sp.add_argument("--ulog-size", type=int, default=2048)
            sp.add_argument("--ablate", choices=ABLATIONS, default="none")

    ins = sub.add_parser("insert", help="timed insertion benchmark")
    common(ins)
    ins.add_argument("--warmup", type=float, default=0.10)
    ins.add_argument("--delete-fraction", type=float, default=0.0)
    ins.set_defaults(func=cmd_insert)

    ker = sub.add_parser("kernel", help="run a graph kernel on a consistent snapshot")
    ker.add_argument("kernel", help="pr | bfs | bc | cc")
    common(ker)
    ker.add_argument("--source", type=int, default=0)
    ker.add_argument("--trials", type=int, default=1)
    ker.add_argument("--verify", action="store_true")
    ker.add_argument("--result", help="write vertex<TAB>value lines here")
    ker.set_defaults(func=cmd_kernel)

    ct = sub.add_parser("crashtest", help="crash-injection suite")
    common(ct, sizing=False)
    mode = ct.add_mutually_exclusive_group()
    mode.add_argument("--points", type=int, default=1000)
    mode.add_argument("--exhaustive", action="store_true")
    ct.add_argument("--torn", action="store_true")
    ct.add_argument("--edges", type=int, default=500)
    ct.set_defaults(func=cmd_crashtest)

    rc = sub.add_parser("recover", help="open a region file and report recovery")
    common(rc, sizing=False)
    rc.add_argument("--stats", action="store_true")
    rc.set_defaults(func=cmd_recover)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (UsageError, BadParams, ParseError, IdOverflow, UnknownKernel, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except PmGraphError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
