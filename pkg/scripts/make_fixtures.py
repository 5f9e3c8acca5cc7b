"""Regenerate the bundled track fixtures by seeded random search.

Random trivalent ribbon graphs are drawn until one has the requested genus,
topological type, orientability and recurrence, and a finite quotient
splitting graph.  For the fixture that feeds the coding pipeline every
quotient node must have a recurrent split, and the stored track is the
quotient node with the most numbered first-return loops.

    python3 scripts/make_fixtures.py [--only NAME]
"""
from __future__ import annotations

import argparse
import random
from pathlib import Path

from teichmix import measurecone as mc
from teichmix import splitflow as sf
from teichmix import tracknet as tn

OUT = Path(__file__).resolve().parents[1] / "src" / "teichmix" / "fixtures"

# name: (switches, genus, punctures, disc degrees, orientable, rng seed, loop length cap)
# A loop cap of 0 stores the search result itself instead of scanning the quotient.
SPECS = {
    "genus2_type22": (8, 2, 0, (2, 2), True, 1, 0),
    "genus2_type4": (6, 2, 0, (4,), True, 3, 8),
    "genus1_type2_punct2": (6, 1, 2, (2,), False, 0, 0),
    "genus2_type13": (8, 2, 0, (1, 3), False, 0, 0),
}


def search(V, genus, punctures, degrees, orientable, seed, total=True):
    rng = random.Random(seed)
    while True:
        t = tn.random_track(V, genus, punctures, rng)
        if t is None:
            continue
        try:
            if tn.inspect(t).genus_from_euler != genus:
                continue
            tt = tn.topological_type(t)
        except tn.TrackError:
            continue
        if tt.disc_degrees != degrees or tn.is_orientable(t) != orientable:
            continue
        if not mc.is_recurrent(t) or not tn.large_branches(t):
            continue
        try:
            q, _ = sf.build_quotient(t, max_nodes=2000)
        except sf.SplitFlowError:
            continue
        if total and any(not q.edges[k] for k in q.reps):
            continue
        return t, q


def best_base(q: sf.QuotientGraph, cap: int) -> tuple[str, int]:
    best = (None, -1)
    for k in sorted(q.reps):
        n = len(sf.first_return_loops(sf.reroot(q, k), cap))
        if n > best[1]:
            best = (k, n)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--only")
    args = ap.parse_args()
    OUT.mkdir(parents=True, exist_ok=True)
    for name, (V, g, m, deg, ori, seed, cap) in SPECS.items():
        if args.only and name != args.only:
            continue
        t, q = search(V, g, m, deg, ori, seed, total=bool(cap))
        if cap:
            key, nloops = best_base(q, cap)
            rep = q.reps[key]
        else:
            rep, nloops = t, 0
        (OUT / f"{name}.tt").write_text(rep.dumps() + "\n")
        print(f"{name}: type {tn.topological_type(rep)} quotient {len(q.reps)} nodes, "
              f"{q.num_edges} edges; {nloops} loops of length <= {cap}", flush=True)
    theta = tn.from_rotation([[(0, 0), (1, 0), (2, 0)], [(0, 1), (2, 1), (1, 1)]], 2, 0)
    (OUT / "theta.tt").write_text(theta.dumps() + "\n")


if __name__ == "__main__":
    main()
