"""Moved slots per insert against ln N, plus the leaf-density census.

Each row is one RMAT scale; ``c`` is the least-squares slope through the origin.
"""

import argparse
import math

import numpy as np

from pmgraph.bench import run_insert
from pmgraph.ingest import rmat, shuffle


def census(g):
    th = g.thresholds
    dens = [g.tree.leaf_density(i) for i in range(g.tree.n_leaves)]
    out = sum(not th.rho_leaf <= d <= th.tau_leaf for d in dens)
    return out, g.tree.n_leaves


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ks", type=int, nargs="*", default=[10, 12, 14, 16])
    ap.add_argument("--factor", type=int, default=16)
    args = ap.parse_args()

    xs, ys = [], []
    for k in args.ks:
        s = shuffle(rmat(k - 4, args.factor, seed=5), 6)
        g, _, _ = run_insert(s, warmup=0.0)
        y = g.journal.moved_slots / len(s)
        out, leaves = census(g)
        xs.append(k * math.log(2))
        ys.append(y)
        print(f"k={k:2d} N={len(s):7d} moved/insert={y:6.2f} leaves outside band={out}/{leaves}")
    x, y = np.array(xs), np.array(ys)
    c = float(x @ y / (x @ x))
    print(f"fit: moved/insert ~= {c:.3f} ln N; max rel. error {np.max(np.abs(y - c * x) / (c * x)):.2f}")


if __name__ == "__main__":
    main()
