"""Build the shipped ``case118.m`` fixture from MATPOWER's IEEE 118-bus case.

The published case carries no thermal ratings (``rateA = 0``) and its
dispatch includes AC losses. This script

1. rebalances generation proportionally to the 4242 MW lossless load, and
2. assigns each branch the smallest rating from a standard ladder
   (100, 175, 250, 350, 500, 750, 1000, 1500 MW) that keeps its 100% load
   DC base-case flow at or below 80% of rating, with a 500 MW floor for
   every branch that touches the 345 kV system.

Run from the repository root::

    python tools/make_case118.py tools/case118_matpower.m src/gridstress/cases/case118.m
"""
import sys

import numpy as np

from gridstress.dcflow import solve_dc
from gridstress.network import parse_case, scale_load

LADDER = np.array([100, 175, 250, 350, 500, 750, 1000, 1500], dtype=float)
BASE_LOADING = 0.80
EHV_KV, EHV_FLOOR = 345.0, 500.0


def base_kv(text):
    body = text.split("mpc.bus = [", 1)[1].split("];", 1)[0]
    rows = [r.split("%")[0].split() for r in body.splitlines()]
    return {int(float(r[0])): float(r[9]) for r in rows if r}


def assign_ratings(net, flows, kv):
    need = np.abs(flows) / BASE_LOADING
    idx = np.searchsorted(LADDER, need)
    if (idx >= LADDER.size).any():
        raise SystemExit("a base flow exceeds the largest ladder rating")
    floor = np.array([
        EHV_FLOOR if max(kv[br.from_bus], kv[br.to_bus]) >= EHV_KV else 0.0
        for br in net.branches
    ])
    return np.maximum(LADDER[idx], floor)


def rewrite(text, table, column, values):
    out, inside, k = [], False, 0
    for line in text.splitlines():
        if line.strip().startswith(f"mpc.{table} = ["):
            inside = True
        elif inside and line.strip().startswith("];"):
            inside = False
        elif inside and line.strip() and not line.strip().startswith("%"):
            body, _, tail = line.partition(";")
            tokens = body.split()
            tokens[column] = f"{values[k]:.10g}"
            k += 1
            line = "\t" + "\t".join(tokens) + ";" + tail
        out.append(line)
    assert k == len(values), (table, k, len(values))
    return "\n".join(out) + "\n"


def main(src, dst):
    text = open(src).read()
    raw = parse_case(text, default_rating=1.0)
    net = scale_load(raw, 1.0)
    flows = solve_dc(net).flows
    ratings = assign_ratings(net, flows, base_kv(text))

    # generator rows in file order, including any that are out of service
    gen_out = iter(g.output for g in net.generators)
    pg = []
    inside = False
    for line in text.splitlines():
        s = line.strip()
        if s.startswith("mpc.gen = ["):
            inside = True
        elif inside and s.startswith("];"):
            break
        elif inside and s and not s.startswith("%"):
            status = float(s.split()[7])
            pg.append(next(gen_out) if status > 0 else 0.0)

    text = rewrite(text, "gen", 1, pg)
    text = rewrite(text, "branch", 5, ratings)
    header = (
        "%   gridstress fixture: generation rebalanced to the lossless load and\n"
        "%   rateA assigned by tools/make_case118.py (ladder 100..1500 MW, base\n"
        "%   DC flow <= 80% of rating, 500 MW floor at 345 kV). Original data:\n"
        "%   MATPOWER case118.m.\n"
    )
    lines = text.splitlines(keepends=True)
    lines.insert(2, header)
    open(dst, "w").write("".join(lines))
    vals, counts = np.unique(ratings, return_counts=True)
    print(dict(zip(vals.tolist(), counts.tolist())))


if __name__ == "__main__":
    main(*sys.argv[1:3])
