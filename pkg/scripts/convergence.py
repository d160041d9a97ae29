"""Observed convergence order of the explicit scheme under step halving."""

import argparse

from mrpmm.pde import GridSpec, richardson, solve_all
from mrpmm.presets import reference_model


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dt", type=float, default=0.01, help="coarsest step")
    args = ap.parse_args()
    p = reference_model()
    sols = [solve_all(p, GridSpec.build(p, args.dt / 2**k)) for k in range(3)]
    for name in ("theta", "omega", "zeta1", "zeta0"):
        fields = [getattr(s, name) for s in sols]
        order, e1, e2 = richardson(fields)
        mean_order, _, _ = richardson(fields, norm="mean")
        print(f"{name:>6}: sup order {order:5.2f} (|d1| {e1:.3e}, |d2| {e2:.3e})  mean order {mean_order:5.2f}")


if __name__ == "__main__":
    main()
