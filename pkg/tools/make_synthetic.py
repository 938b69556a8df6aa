"""Write the small synthetic fixtures shipped in ``src/gridstress/cases``.

``four_bus``
    Hand-built: one overloaded line with exactly one switching candidate
    predicted to relieve it.
``ladder12``
    Two six-bus rails joined by six rungs, generation at one end and load
    spread along the far rail.
``mesh30``
    A seeded random meshed network with 30 branches, one of them a radial
    spur, rated so the base case is stressed under N-1.

Run from the repository root::

    python tools/make_synthetic.py src/gridstress/cases
"""
import json
import sys
from pathlib import Path

import numpy as np

from gridstress.dcflow import solve_dc
from gridstress.network import Branch, Bus, Generator, Network, to_json

SEED = 20240611


def four_bus():
    # Branch 5 (2-3) is the worst post-contingency overload; opening branch 1
    # is the only switch predicted to relieve it.
    buses = [Bus(1, 0.0), Bus(2, 0.0), Bus(3, 100.0), Bus(4, 60.0)]
    ends = [(1, 2), (2, 4), (1, 3), (3, 4), (2, 3)]
    x = [0.15, 0.05, 0.2, 0.15, 0.15]
    ratings = [100.0, 150.0, 150.0, 40.0, 40.0]
    branches = [Branch(k + 1, a, b, xk, r) for k, ((a, b), xk, r) in enumerate(zip(ends, x, ratings))]
    gens = [Generator(1, 140.0, 500.0), Generator(2, 20.0, 100.0)]
    return Network(100.0, buses, branches, gens, 1, "four_bus")


def ladder12():
    rail = range(1, 7)
    loads = {i: 0.0 for i in range(1, 13)}
    loads.update({8: 40.0, 9: 60.0, 10: 60.0, 11: 80.0, 12: 100.0, 5: 30.0, 6: 50.0})
    buses = [Bus(i, loads[i]) for i in range(1, 13)]
    ends = [(i, i + 1) for i in rail if i < 6] + [(i + 6, i + 7) for i in rail if i < 6]
    ends += [(i, i + 6) for i in rail]
    x = [0.08] * 5 + [0.12] * 5 + [0.1] * 6
    branches = [Branch(k + 1, a, b, xk, 250.0) for k, ((a, b), xk) in enumerate(zip(ends, x))]
    total = sum(loads.values())
    gens = [Generator(1, 0.6 * total, 400.0), Generator(7, 0.4 * total, 300.0)]
    return Network(100.0, buses, branches, gens, 1, "ladder12")


def mesh30(seed=SEED):
    rng = np.random.default_rng(seed)
    n_mesh, n_bus = 14, 15
    ends = [(int(rng.integers(1, k)), k) for k in range(2, n_mesh + 1)]  # random tree
    have = {tuple(sorted(e)) for e in ends}
    while len(ends) < 29:
        a, b = (int(v) for v in rng.choice(np.arange(1, n_mesh + 1), 2, replace=False))
        if tuple(sorted((a, b))) not in have:
            have.add(tuple(sorted((a, b))))
            ends.append((a, b))
    ends.append((int(rng.integers(1, n_mesh + 1)), n_bus))  # radial spur
    x = np.round(rng.uniform(0.04, 0.25, len(ends)), 4)
    loads = np.round(rng.uniform(10.0, 60.0, n_bus), 1)
    gen_buses = [int(b) for b in rng.choice(np.arange(1, n_mesh + 1), 4, replace=False)]
    loads[[b - 1 for b in gen_buses]] = 0.0
    share = rng.dirichlet(np.ones(len(gen_buses)))
    total = float(loads.sum())
    gens = [Generator(b, round(total * s, 6), round(total * s * 1.5, 1)) for b, s in zip(gen_buses, share)]
    # balance exactly after rounding
    gens[0] = Generator(gens[0].bus, total - sum(g.output for g in gens[1:]), gens[0].max_output)
    buses = [Bus(i + 1, float(loads[i])) for i in range(n_bus)]
    draft = [Branch(k + 1, a, b, float(x[k]), 1.0) for k, (a, b) in enumerate(ends)]
    net = Network(100.0, buses, draft, gens, gen_buses[0], "mesh30")
    flows = np.abs(solve_dc(net).flows)
    # ratings: 10 MW steps at 1.2x base flow, at least 20 MW
    ratings = np.maximum(20.0, np.ceil(1.2 * flows / 10.0) * 10.0)
    branches = [Branch(b.id, b.from_bus, b.to_bus, b.reactance, float(r)) for b, r in zip(draft, ratings)]
    return Network(100.0, buses, branches, gens, gen_buses[0], "mesh30")


def main(out_dir):
    out = Path(out_dir)
    for net in (four_bus(), ladder12(), mesh30()):
        text = to_json(net)
        json.loads(text)
        (out / f"{net.name}.json").write_text(text)
        print(net.name, len(net.buses), "buses", len(net.branches), "branches")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/gridstress/cases")
