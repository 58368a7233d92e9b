"""Insertion throughput and write amplification for 1..T writer threads.

CPython's GIL serializes the writers, so this measures lock overhead
rather than parallel speedup.
"""

import argparse

from pmgraph.bench import run_insert
from pmgraph.ingest import rmat, shuffle


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=int, default=13)
    ap.add_argument("--factor", type=int, default=16)
    ap.add_argument("--threads", type=int, nargs="*", default=[1, 2, 4, 8])
    args = ap.parse_args()

    stream = shuffle(rmat(args.scale, args.factor, seed=1), 2)
    for t in args.threads:
        _, rep, _ = run_insert(stream, threads=t)
        print(f"threads={t} edges={rep.edges} MEPS={rep.meps:.4f} WA={rep.write_amplification:.2f}")


if __name__ == "__main__":
    main()
