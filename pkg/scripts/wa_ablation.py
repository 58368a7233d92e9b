"""Write amplification of each component toggle on a skewed RMAT stream.

    python3 scripts/wa_ablation.py --scale 14 --factor 16
"""

import argparse
import json

from pmgraph.bench import run_insert
from pmgraph.ingest import rmat, shuffle
from pmgraph.store import ABLATIONS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=int, default=14)
    ap.add_argument("--factor", type=int, default=16)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--ablations", nargs="*", default=list(ABLATIONS))
    args = ap.parse_args()

    stream = shuffle(rmat(args.scale, args.factor, seed=args.seed), args.seed + 1)
    base = None
    for ab in args.ablations:
        g, rep, _ = run_insert(stream, ablation=ab)
        c = rep.counters
        row = {"ablation": ab, "wa": round(rep.write_amplification, 2),
               "wa_256": round(rep.media_bytes_256 / rep.payload_bytes, 2),
               "meps": round(rep.meps, 4),
               "array_inserts": c.get("array_inserts"), "log_inserts": c.get("log_inserts"),
               "rebalances": g.journal.rebalances, "resizes": c.get("resizes")}
        if ab == "none":
            base = rep.write_amplification
        elif base:
            row["wa_none_over_this"] = round(base / rep.write_amplification, 3)
        print(json.dumps(row))


if __name__ == "__main__":
    main()
