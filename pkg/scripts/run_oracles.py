"""Compare the solved fields with their Monte-Carlo oracles at a few elapsed times.

    python scripts/run_oracles.py --dt 0.0025 --paths 100000
"""

import argparse
import time

import numpy as np

from mrpmm.pde import GridSpec, solve_all
from mrpmm.policy import Eta0Policy
from mrpmm.presets import reference_model
from mrpmm.simulator import oracle_elapsed_time_functional, oracle_inventory_moments, oracle_terminal_price


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dt", type=float, default=0.0025)
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--s", type=float, nargs="+", default=[0.0, 0.1, 0.3, 0.6, 1.2])
    args = ap.parse_args()

    p = reference_model()
    t0 = time.perf_counter()
    sol = solve_all(p, GridSpec.build(p, args.dt))
    print(f"solved on dt={args.dt} in {time.perf_counter() - t0:.1f} s")
    rng = np.random.default_rng(args.seed)
    gp, gm = sol.G
    pol = Eta0Policy(sol.G)

    def omega_src(t, s):
        return np.maximum(gp.interp(t, s), 0.0) + np.maximum(gm.interp(t, s), 0.0)

    print(f"{'s':>5} {'field':>7} {'pde':>10} {'mc':>10} {'se':>8} {'z':>6}")
    for s in args.s:
        th = oracle_terminal_price(p, 0.0, s, args.paths, rng)
        om = oracle_elapsed_time_functional(p, omega_src, 0.0, s, args.paths, rng, n_steps=600)
        my, mq, sy, sq = oracle_inventory_moments(p, pol, 0.0, s, args.paths, rng)
        for name, (mc, se) in (("theta", th), ("omega", om), ("zeta1", (my, sy)), ("zeta0", (mq, sq))):
            v = float(getattr(sol, name).at(0.0, s))
            print(f"{s:5.2f} {name:>7} {v:10.4f} {mc:10.4f} {se:8.4f} {(v - mc) / se:6.2f}")


if __name__ == "__main__":
    main()
