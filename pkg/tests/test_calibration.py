import json
import warnings

import numpy as np
import pytest
from scipy import integrate, stats

from mrpmm.calibration import (calibrate, estimate_alpha, estimate_lambda_mle, estimate_renewal,
                               estimate_rho, estimate_vartheta)
from mrpmm.distributions import RenewalDist
from mrpmm.errors import InsufficientData
from mrpmm.order_flow import FillDist
from mrpmm.presets import poisson_model, reference_model
from mrpmm.tape import EventTape, market_tape


def hand_tape(jumps, trades=(), lot=2, horizon=None):
    """Tape from ``[(time, direction)]`` jumps and ``[(time, sign, fill)]`` trades."""
    rows = [(t, True, d, lot) for t, d in jumps] + [(t, False, z, k) for t, z, k in trades]
    rows.sort()
    t, j, d, f = (np.array(c) for c in zip(*rows))
    meta = {"lot_size": lot, "horizon": horizon if horizon is not None else float(t[-1])}
    return EventTape(t, j, d, f, np.zeros(t.size), np.zeros(t.size), meta)


@pytest.fixture(scope="module")
def ref_tape(ref):
    return market_tape(ref, 20_000.0, np.random.default_rng(77), agent_on=True)


# -- alpha -----------------------------------------------------------------------------


def test_alternating_jumps_give_minus_one():
    tape = hand_tape([(float(i), (-1) ** i) for i in range(1, 30)])
    with pytest.warns(RuntimeWarning):
        a, se = estimate_alpha(tape)
    assert a == -1.0 and se == 0.0


def test_constant_direction_warns():
    tape = hand_tape([(float(i), 1) for i in range(1, 30)])
    with pytest.warns(RuntimeWarning):
        a, se = estimate_alpha(tape)
    assert a == 1.0 and se == 0.0


def test_alpha_round_trip(ref, rng):
    tape = market_tape(ref, 5_000.0, rng)
    a, se = estimate_alpha(tape)
    assert tape.is_jump.sum() > 10_000
    assert abs(a - ref.alpha) < 3 * se


def test_alpha_needs_two_jumps():
    with pytest.raises(InsufficientData):
        estimate_alpha(hand_tape([(1.0, 1)], [(0.5, 1, 0)]))


# -- renewal laws ------------------------------------------------------------------------


def test_missing_class_flagged():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = estimate_renewal(hand_tape([(float(i), 1) for i in range(1, 80)]))
    assert any("F_minus" in f for f in est.flags)


def test_exponential_hazards_flat(rng):
    p = poisson_model(gamma=2.0, alpha=0.2)
    est = estimate_renewal(market_tape(p, 10_000.0, rng))
    keep = slice(0, -1)  # the open last bin has no finite midpoint
    for h, se, true in ((est.h_plus, est.se_plus, 1.2), (est.h_minus, est.se_minus, 0.8)):
        z = (h[keep] - true) / se[keep]
        assert np.mean(np.abs(z) > 3) <= 0.05
        assert np.all(np.abs(z) < 5)


def test_weibull_hazards_round_trip(weibull_mix, rng):
    p = weibull_mix
    est = estimate_renewal(market_tape(p, 20_000.0, rng))
    lo, hi = est.bin_edges[:-2], est.bin_edges[1:-1]
    for side, h_hat, se in ((1, est.h_plus, est.se_plus), (-1, est.h_minus, est.se_minus)):
        # exposure-weighted bin hazard of the true model
        truth = []
        for a, c in zip(lo, hi):
            num = integrate.quad(lambda s: float(p.hazards(s)[0 if side == 1 else 1]) * p.survival(s), a, c)[0]
            den = integrate.quad(p.survival, a, c)[0]
            truth.append(num / den)
        z = (h_hat[:-1] - np.array(truth)) / se[:-1]
        assert np.mean(np.abs(z) > 3) <= 0.1
        assert np.all(np.abs(z) < 5)


def test_empirical_cdfs(ref, ref_tape):
    est = estimate_renewal(ref_tape)
    s = np.array([0.1, 0.5, 1.0])
    # the empirical law of S given B = +1 is the exponential component
    assert np.allclose(est.F_plus(s), ref.dist_plus.cdf(s), atol=0.03)
    assert np.allclose(est.F_minus(s), ref.dist_minus.cdf(s), atol=0.01)


# -- trade intensity ---------------------------------------------------------------------


def test_homogeneous_rate(rng):
    p = poisson_model(gamma=1.0, level=2.0)
    tape = market_tape(p, 20_000.0, rng)
    est = estimate_lambda_mle(tape)
    n, T = est.n_trades, est.exposure
    assert abs(est.lam0 - n / T) < 3 * np.sqrt(n) / T
    # a and k are not identified when a = 0; the decaying part must carry no mass
    assert est.a / est.k < 0.01


def test_lambda_round_trip(ref, ref_tape):
    est = estimate_lambda_mle(ref_tape)
    for got, se, true in zip((est.lam0, est.a, est.k), est.se, (0.5, 2.0, 1.5)):
        assert abs(got - true) < 3 * se
    assert est(0.0) == pytest.approx(est.lam0 + est.a)


def test_lambda_needs_trades():
    with pytest.raises(InsufficientData):
        estimate_lambda_mle(hand_tape([(1.0, 1), (2.0, -1)]))


# -- rho ---------------------------------------------------------------------------------


def test_concordant_trades_give_plus_one():
    tape = hand_tape([(1.0, 1), (3.0, -1)], [(1.5, 1, 0), (2.0, 1, 0), (3.5, -1, 0)])
    assert estimate_rho(tape) == (1.0, 0.0)


def test_rho_round_trip(ref, ref_tape):
    r, se = estimate_rho(ref_tape)
    assert abs(r - ref.rho) < 3 * se


def test_rho_zero(rng):
    p = reference_model(rho=0.0)
    r, se = estimate_rho(market_tape(p, 5_000.0, rng))
    assert abs(r) < 3 * se


def test_rho_needs_trade_after_jump():
    with pytest.raises(InsufficientData):
        estimate_rho(hand_tape([(2.0, 1)], [(1.0, 1, 0)]))


# -- fills -------------------------------------------------------------------------------


def test_fill_round_trip(ref, ref_tape):
    est = estimate_vartheta(ref_tape)
    for counts, total, pmf in ((est.counts_plus, est.trades_plus, ref.fill_plus.pmf),
                               (est.counts_minus, est.trades_minus, ref.fill_minus.pmf)):
        assert stats.chisquare(counts, total * pmf).pvalue > 0.01


def test_degenerate_fill(rng):
    p = reference_model(fill_plus=FillDist.degenerate(2), fill_minus=FillDist.degenerate(2))
    est = estimate_vartheta(market_tape(p, 500.0, rng, agent_on=True))
    assert np.array_equal(est.pmf_plus, [0.0, 0.0, 1.0]) and np.array_equal(est.pmf_minus, [0.0, 0.0, 1.0])


def test_fills_need_trades_between_jumps():
    tape = hand_tape([(1.0, 1), (2.0, -1), (3.0, 1)])
    with pytest.raises(InsufficientData):
        estimate_vartheta(tape)


# -- bundle ------------------------------------------------------------------------------------


def test_calibrate_bundle(ref_tape, tmp_path):
    rep = calibrate(ref_tape)
    assert rep.fills is not None
    d = json.loads(rep.to_json())
    assert {"alpha", "rho", "lambda", "renewal", "fills"} <= set(d)
    rep.write_curves(tmp_path / "cal")
    assert (tmp_path / "cal_hazard.csv").read_text().startswith("s_lo,s_hi")
    assert (tmp_path / "cal_lambda.csv").exists()


def test_calibrate_from_csv(ref_tape, tmp_path):
    ref_tape.to_csv(tmp_path / "tape.csv")
    back = EventTape.from_csv(tmp_path / "tape.csv")
    a = calibrate(back)
    b = calibrate(ref_tape)
    assert a.to_json() == b.to_json()
