"""Simulate a long tape from known primitives and print the estimates with z-scores."""

import argparse

import numpy as np
from scipy import stats

from mrpmm.calibration import calibrate
from mrpmm.presets import reference_model
from mrpmm.tape import market_tape


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--horizon", type=float, default=20_000.0)
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()
    p = reference_model()
    tape = market_tape(p, args.horizon, np.random.default_rng(args.seed), agent_on=True)
    rep = calibrate(tape)
    print(f"{len(tape)} events, {int(tape.is_jump.sum())} jumps")
    lam = rep.lam
    rows = [("alpha", rep.alpha, rep.alpha_se, p.alpha), ("rho", rep.rho, rep.rho_se, p.rho)]
    truth = p.lambda_spec.params
    rows += [(k, v, se, truth[k]) for k, v, se in zip(("lam0", "a", "k"), (lam.lam0, lam.a, lam.k), lam.se)]
    for name, est, se, true in rows:
        print(f"{name:>6}: {est:+.4f} +- {se:.4f}  truth {true:+.4f}  z {(est - true) / se:+.2f}")
    f = rep.fills
    for side, counts, n, pmf in (("+", f.counts_plus, f.trades_plus, p.fill_plus.pmf),
                                 ("-", f.counts_minus, f.trades_minus, p.fill_minus.pmf)):
        print(f"fills{side}: {np.round(counts / n, 4)} vs {pmf}  p={stats.chisquare(counts, n * pmf).pvalue:.3f}")


if __name__ == "__main__":
    main()
