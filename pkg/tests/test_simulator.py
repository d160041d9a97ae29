import json

import numpy as np
import pytest

from mrpmm.errors import PolicyUndefined, ValidationError
from mrpmm.pde import GridSpec, solve_all
from mrpmm.policy import AlwaysOnPolicy, ApproxPolicy, Eta0Policy, HoldPolicy, adjustments
from mrpmm.simulator import (BacktestConfig, oracle_elapsed_time_functional, oracle_inventory_moments,
                             run_backtest, simulate_paths, utility_curve)
from mrpmm.tape import replay


def test_idle_policy_keeps_cash(ref):
    rep = run_backtest(BacktestConfig(n_paths=500, seed=3, x0=12.5), ref)
    assert np.all(rep.terminal["x"] == 12.5) and np.all(rep.terminal["y"] == 0)
    assert rep.fills["trade_events"] == 0 and rep.fills["jump_events"] == 0


@pytest.mark.parametrize("y0,i0", [(3, 1), (-2, 1), (2, -1)])
def test_hold_value(ref, ref_solution, y0, i0):
    p = ref.replace(eta=0.05)
    s0, p0, x0 = 0.3, 100.0, 1.0
    rep = run_backtest(BacktestConfig(n_paths=20_000, seed=11, p0=p0, i0=i0, s0=s0, x0=x0, y0=y0), p)
    q0 = i0 * y0
    expect = x0 + y0 * p0 + q0 * float(ref_solution.theta.at(0.0, s0)) - p.eta * y0**2
    bias = abs(q0) * 0.02  # O(dt) theta bias at dt = 0.01
    assert abs(rep.mean_utility - expect) <= 3 * rep.se_utility + bias


def test_market_making_gain_matches_omega(ref, ref_solution):
    s0 = 0.0
    cfg = BacktestConfig(n_paths=20_000, seed=5, s0=s0, policy=Eta0Policy(ref_solution.G))
    opt = run_backtest(cfg, ref)
    hold = run_backtest(BacktestConfig(n_paths=20_000, seed=5, s0=s0), ref)
    gap = opt.terminal["utility"] - hold.terminal["utility"]
    se = gap.std(ddof=1) / np.sqrt(gap.size)
    assert abs(gap.mean() - float(ref_solution.omega.at(0.0, s0))) <= 3 * se + 0.03


def test_report_fields(ref):
    rep = run_backtest(BacktestConfig(n_paths=2_000, seed=1, policy=AlwaysOnPolicy()), ref)
    u = rep.terminal["utility"]
    assert rep.se_utility == pytest.approx(u.std(ddof=1) / np.sqrt(u.size))
    assert rep.fills["jump_volume"] == ref.lot_size * rep.fills["jump_events"]
    assert rep.fills["trade_volume"] <= ref.lot_size * rep.fills["trade_events"]
    d = json.loads(rep.to_json())
    assert d["policy"] == "always_on" and "terminal" not in d


def test_seed_determinism(ref):
    cfg = BacktestConfig(n_paths=3_000, seed=42, policy=AlwaysOnPolicy(), chunk_size=1_000)
    a = run_backtest(cfg, ref)
    b = run_backtest(cfg, ref)
    assert a.to_json() == b.to_json()
    assert np.array_equal(a.terminal["x"], b.terminal["x"])
    c = run_backtest(BacktestConfig(n_paths=3_000, seed=43, policy=AlwaysOnPolicy(), chunk_size=1_000), ref)
    assert c.mean_utility != a.mean_utility


def test_recorded_tapes_replay_exactly(ref):
    cfg = BacktestConfig(n_paths=50, seed=9, policy=AlwaysOnPolicy(), record=True, p0=100.0, x0=2.0, y0=1)
    term, _, tapes = simulate_paths(ref, cfg)
    assert len(tapes) == 50
    for k, tape in enumerate(tapes):
        tape.validate()
        x, y = replay(tape)
        assert x == term["x"][k] and y == term["y"][k]


def test_policy_undefined_past_its_grid(ref):
    g = GridSpec.build(ref.replace(horizon=1.0), 0.05)
    sol = solve_all(ref.replace(horizon=1.0), g)
    with pytest.raises(PolicyUndefined):
        run_backtest(BacktestConfig(n_paths=100, seed=0, policy=Eta0Policy(sol.G)), ref)


def test_config_validation():
    with pytest.raises(ValidationError):
        BacktestConfig(n_paths=0)
    with pytest.raises(ValidationError):
        BacktestConfig(i0=0)


def test_constant_integrand_is_exact(ref, rng):
    mean, se, resets = oracle_elapsed_time_functional(
        ref, lambda t, s: np.full(np.shape(t), 1.7), 0.5, 0.2, 2_000, rng, return_resets=True)
    assert mean == pytest.approx(1.7 * (ref.horizon - 0.5), rel=1e-12)
    assert se < 1e-12
    assert resets.mean() > 1.0


def test_elapsed_time_integrand_sees_age(ref, rng):
    # resets keep the mean age well below that of a path that never resets
    mean, _ = oracle_elapsed_time_functional(ref, lambda t, s: s, 0.0, 0.0, 5_000, rng)
    assert 0.0 < mean < 0.5 * ref.horizon**2


def test_inventory_oracle_matches_zeta(ref, ref_solution, rng):
    pol = Eta0Policy(ref_solution.G)
    s0 = 0.3
    my, mq, sy, sq = oracle_inventory_moments(ref, pol, 0.0, s0, 20_000, rng)
    assert abs(my - float(ref_solution.zeta1.at(0.0, s0))) <= 3 * sy + 0.03
    assert abs(mq - float(ref_solution.zeta0.at(0.0, s0))) <= 3 * sq + 0.15


def test_utility_curve_common_numbers(ref, ref_solution):
    adj = adjustments(ref, ref_solution.zeta1)
    pols = {"hold": HoldPolicy(), "approx": lambda eta: ApproxPolicy(ref_solution.G, adj, eta)}
    rows = utility_curve(ref, pols, [0.0, 0.05], BacktestConfig(n_paths=1_000, seed=4))
    assert [(r["eta"], r["policy"]) for r in rows] == [(0.0, "hold"), (0.0, "approx"),
                                                        (0.05, "hold"), (0.05, "approx")]
    assert rows[0]["mean"] == rows[2]["mean"] == 0.0
    # more risk aversion, smaller terminal inventory dispersion
    assert rows[3]["var_y"] < rows[1]["var_y"]
