"""Search light offsets for the bundled corridor.

Keeps offset tuples where the 40 km/h baseline stops at exactly three lights
and the non-optimal advised driver makes no stop, then ranks them by energy
reduction.  Used once to freeze the offsets in mtla/data/milan_corridor.toml.
"""
import argparse
import dataclasses
import itertools
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from mtla import load_scenario
from mtla.sim import run


def with_offsets(sc, offsets):
    lights = tuple(dataclasses.replace(tl, offset=float(o)) for tl, o in zip(sc.lights, offsets))
    return dataclasses.replace(sc, lights=lights)


def evaluate(offsets):
    sc = with_offsets(load_scenario("milan_corridor"), offsets)
    base = run(sc, "baseline").summary
    if base.stops != 3:
        return None
    adv = run(sc, "advised_nonoptimal").summary
    if adv.stops or adv.red_crossings:
        return None
    red = 100 * (base.aec_j_per_m - adv.aec_j_per_m) / base.aec_j_per_m
    first_green = base.crossings[0].time < 300 / sc.initial_speed + 1.0  # TL1 passed unhindered
    return offsets, red, base.travel_time, adv.travel_time, first_green


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--step", type=int, default=5)
    ap.add_argument("--samples", type=int, default=3000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--top", type=int, default=10)
    ap.add_argument("--target", type=float, default=None,
                    help="rank by distance to this reduction (%%) instead of the largest")
    args = ap.parse_args()

    grid = range(0, 75, args.step)
    combos = list(itertools.product(grid, repeat=4))
    rng = np.random.default_rng(args.seed)
    if len(combos) > args.samples:
        combos = [combos[i] for i in rng.choice(len(combos), args.samples, replace=False)]
    with ProcessPoolExecutor() as ex:
        hits = [r for r in ex.map(evaluate, combos, chunksize=16) if r]
    if args.target is None:
        hits.sort(key=lambda r: -r[1])
    else:
        hits.sort(key=lambda r: (not r[4], abs(r[1] - args.target)))
    print(f"{len(hits)} / {len(combos)} candidates")
    for offsets, red, tb, ta, fg in hits[: args.top]:
        print(f"offsets={offsets} reduction={red:.1f}% t_base={tb:.1f} t_adv={ta:.1f} "
              f"tl1_free={fg}")


if __name__ == "__main__":
    main()
