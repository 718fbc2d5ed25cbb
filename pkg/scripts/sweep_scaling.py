#!/usr/bin/env python3
"""Wall time per message-passing sweep versus factor-graph size.

Prints one line per network and the fitted power-law exponent of
seconds-per-sweep against edge count.
"""

import argparse
import time

import numpy as np

from gbpobs import build_detection_graph, build_jacobian, generate_measurement_config, make_synthetic_network
from gbpobs.factor_graph import MessageState, run_sweeps


def per_sweep(g, sweeps, repeats=5):
    best = np.inf
    for _ in range(repeats):
        done, spent = 0, 0.0
        while done < sweeps:
            s = MessageState.initial(g)
            t = time.perf_counter()
            s = run_sweeps(g, s, max_sweeps=sweeps - done, marginal_stop=False)
            spent += time.perf_counter() - t
            done += s.tau
        best = min(best, spent / done)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--buses", type=int, nargs="+", default=[250, 800, 2500, 8000, 25000, 80000])
    ap.add_argument("--redundancy", type=float, default=1.5)
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()

    edges, times = [], []
    print(f"{'buses':>8} {'edges':>9} {'updates':>9} {'us/sweep':>10} {'ns/edge':>8}")
    for n in args.buses:
        net = make_synthetic_network(n, 2.6, args.seed)
        J = build_jacobian(net, generate_measurement_config(net, args.redundancy, args.seed))
        g = build_detection_graph(J).with_probe(0)
        run_sweeps(g, max_sweeps=2)
        t = per_sweep(g, max(20, 4_000_000 // g.n_edges))
        edges.append(g.n_edges)
        times.append(t)
        print(f"{n:>8} {g.n_edges:>9} {g.updates_per_sweep():>9} {1e6 * t:>10.1f} {1e9 * t / g.n_edges:>8.1f}")
    slope, _ = np.polyfit(np.log(edges), np.log(times), 1)
    print(f"fitted exponent {slope:.3f}")


if __name__ == "__main__":
    main()
