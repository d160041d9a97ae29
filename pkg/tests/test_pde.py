import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrpmm.distributions import RenewalDist
from mrpmm.errors import OutOfGrid, QRangeTooSmall, StabilityViolation, ValidationError
from mrpmm.model import theta_infinity
from mrpmm.pde import (GridSpec, ValueGrid, ZetaField, barrier_G, barrier_parts, check_q_range,
                       richardson, solve_all, solve_omega, solve_theta, solve_zeta0, solve_zeta1,
                       solve_zeta_exact, step_barrier)
from mrpmm.presets import poisson_model, reference_model
from mrpmm.simulator import oracle_elapsed_time_functional, oracle_terminal_price


def zero_like(g, name="G"):
    return ValueGrid(name, np.zeros((g.nt + 1, g.ns + 1)), g)


def const_like(g, c, name="G"):
    return ValueGrid(name, np.full((g.nt + 1, g.ns + 1), float(c)), g)


# -- grids ---------------------------------------------------------------------------


def test_grid_rejects_unstable_step(ref):
    with pytest.raises(StabilityViolation):
        GridSpec.build(ref, 0.2)


def test_grid_requires_divisor(ref):
    with pytest.raises(ValidationError):
        GridSpec.build(ref, 0.007)


def test_grid_lookup_bounds(ref):
    g = GridSpec.build(ref, 0.05)
    with pytest.raises(OutOfGrid):
        g.t_index(ref.horizon + 0.1)
    assert g.s_index(1e6) == g.ns


# -- theta ---------------------------------------------------------------------------------


def test_theta_vanishes_when_price_is_martingale():
    p = poisson_model(gamma=2.0, alpha=0.0)
    th = solve_theta(p, GridSpec.build(p, 0.02))
    assert np.all(th.values == 0.0)


def test_theta_vanishes_for_equal_hazards_any_alpha():
    # identical laws with alpha = 0 give h+ = h- even for a non-exponential law
    p = reference_model(alpha=0.0, dist_minus=RenewalDist.exponential(1.0))
    th = solve_theta(p, GridSpec.build(p, 0.02))
    assert np.max(np.abs(th.values)) < 1e-14


def test_terminal_rows_exact(ref_solution):
    for f in (ref_solution.theta, ref_solution.omega, ref_solution.zeta1, ref_solution.zeta0):
        assert np.all(f.values[-1] == 0.0)


def test_theta_against_monte_carlo(ref, ref_solution, rng):
    s0 = 0.3
    mean, se = oracle_terminal_price(ref, 0.0, s0, 20_000, rng)
    dt = ref_solution.grid.dt
    bias = 2 * dt * 2 * ref.delta * ref.sigma2_max
    assert abs(float(ref_solution.theta.at(0.0, s0)) - mean) <= 3 * se + bias


def test_theta_approaches_stationary_limit(ref):
    dt = 0.01
    T = round(50 * ref.mean_interarrival / dt) * dt
    g = GridSpec.build(ref, dt, T)
    th = solve_theta(ref, g)
    scale = 2 * ref.delta / (1 - ref.alpha)
    err = np.max(np.abs(th.values[0] - theta_infinity(ref, g.s_nodes)))
    assert err <= 0.02 * scale  # O(dt) scheme bias; the 1% target is met at dt = 0.0025


# -- barriers ----------------------------------------------------------------------------------


def test_barrier_terminal_row(ref, ref_solution):
    s = ref_solution.grid.s_nodes
    hp, hm = ref.hazards(s)
    L = ref.lot_size
    for side, G, h, fd in ((1, ref_solution.G_plus, hp, ref.fill_plus),
                           (-1, ref_solution.G_minus, hm, ref.fill_minus)):
        lam = 0.5 * (1 + side * ref.rho) * ref.lam(s)
        expect = lam * (ref.delta - ref.fee) * fd.m1 - h * (ref.delta + ref.fee) * L
        assert np.allclose(G.values[-1], expect, atol=1e-14)


def test_barrier_trade_part_without_price_deviation(ref):
    g = GridSpec.build(ref, 0.05)
    parts = barrier_parts(ref, zero_like(g, "theta"))
    s = g.s_nodes
    lam_p = 0.5 * (1 + ref.rho) * ref.lam(s)
    assert np.allclose(parts["G_trd_plus"].values[0], lam_p * (ref.delta - ref.fee) * ref.fill_plus.m1)
    G = parts["G_plus"].values
    assert np.allclose(G, parts["G_trd_plus"].values - parts["G_jmp_plus"].values)


def test_stationary_barrier(ref):
    dt = 0.01
    T = round(50 * ref.mean_interarrival / dt) * dt
    g = GridSpec.build(ref, dt, T)
    Gp, Gm = barrier_G(ref, solve_theta(ref, g))
    s = g.s_nodes
    ti, t0 = theta_infinity(ref, s), float(theta_infinity(ref, 0.0))
    hp, hm = ref.hazards(s)
    for side, G, h, fd in ((1, Gp, hp, ref.fill_plus), (-1, Gm, hm, ref.fill_minus)):
        lam = 0.5 * (1 + side * ref.rho) * ref.lam(s)
        g_inf = lam * (ref.delta - ref.fee - side * ti) * fd.m1 - h * (ref.delta + ref.fee + t0) * ref.lot_size
        assert np.max(np.abs(G.values[0] - g_inf)) <= 0.01 * np.max(np.abs(g_inf))


def test_step_barrier_averages_along_characteristic():
    v = np.arange(12.0).reshape(3, 4)
    out = step_barrier(v)
    assert out[0, 0] == 0.5 * (v[0, 0] + v[1, 1])
    assert out[0, 3] == 0.5 * (v[0, 3] + v[1, 3])  # held at the last node
    assert np.array_equal(out[-1], v[-1])


# -- omega, zeta1, zeta0 ---------------------------------------------------------------------


def test_nonpositive_barriers_give_zero_fields(ref):
    g = GridSpec.build(ref, 0.05)
    G = (const_like(g, -0.2), const_like(g, -0.1))
    assert np.all(solve_omega(ref, G, g).values == 0.0)
    z1 = solve_zeta1(ref, G, g)
    assert np.all(z1.values == 0.0)
    assert np.all(solve_zeta0(ref, G, z1, g).values == 0.0)


def test_omega_with_constant_barrier_is_linear_in_time(ref):
    g = GridSpec.build(ref, 0.05)
    om = solve_omega(ref, (const_like(g, 0.3), const_like(g, 0.2)), g)
    assert np.allclose(om.values[:, 5], 0.5 * (g.horizon - g.t_nodes))


def test_omega_nonnegative_and_monotone_in_remaining_time(ref_solution):
    om = ref_solution.omega.values
    assert om.min() >= 0.0
    assert np.all(np.diff(om, axis=0) <= 1e-14)


def test_omega_against_feynman_kac(ref, ref_solution, rng):
    gp, gm = ref_solution.G

    def integrand(t, s):
        return np.maximum(gp.interp(t, s), 0.0) + np.maximum(gm.interp(t, s), 0.0)

    mean, se = oracle_elapsed_time_functional(ref, integrand, 0.0, 0.3, 20_000, rng)
    bias = 0.05  # O(dt) gap measured at dt = 0.01
    assert abs(float(ref_solution.omega.at(0.0, 0.3)) - mean) <= 3 * se + bias


def test_zeta1_vanishes_for_symmetric_sides():
    p = poisson_model(gamma=0.5, alpha=0.0, level=3.0, rho=0.0)
    sol = solve_all(p, GridSpec.build(p, 0.02))
    assert sol.G_plus.values.min() > 0
    assert np.max(np.abs(sol.zeta1.values)) < 1e-13
    assert sol.zeta0.values.max() > 0


def test_zeta0_cauchy_schwarz(ref_solution):
    z1, z0 = ref_solution.zeta1.values, ref_solution.zeta0.values
    assert z0.min() >= 0
    assert np.all(z1**2 <= z0 + 1e-12)


# -- exact zeta ------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def coarse(ref):
    g = GridSpec.build(ref, 0.05)
    return g, solve_all(ref, g)


def test_exact_zeta_zero_without_risk_aversion(ref, coarse):
    g, sol = coarse
    z = solve_zeta_exact(ref, sol.G, g, q_max=8, eta=0.0)
    assert np.max(np.abs(z.values)) < 1e-14


@pytest.mark.parametrize("eta", [0.01, 0.2])
def test_exact_zeta_invariants(ref, coarse, eta):
    g, sol = coarse
    z = solve_zeta_exact(ref, sol.G, g, q_max=12, eta=eta)
    q = z.q_nodes
    assert np.array_equal(z.values[-1], np.broadcast_to(eta * (q**2)[:, None], z.values[-1].shape))
    assert z.values.min() >= 0.0
    bound = sol.omega.values[:, None, :] + eta * (q**2)[None, :, None]
    assert np.all(z.values <= bound + 1e-12)


def test_exact_zeta_monotone_in_eta(ref, coarse):
    g, sol = coarse
    lo = solve_zeta_exact(ref, sol.G, g, q_max=10, eta=0.01)
    hi = solve_zeta_exact(ref, sol.G, g, q_max=10, eta=0.05)
    assert np.all(hi.values - lo.values >= -1e-12)


def test_q_range_check(ref, coarse):
    g, sol = coarse
    z = solve_zeta_exact(ref, sol.G, g, q_max=20, eta=0.05)
    assert check_q_range(ref, sol.G, z, tol=1e-4) <= 1e-4
    small = solve_zeta_exact(ref, sol.G, g, q_max=4, eta=0.05)
    with pytest.raises(QRangeTooSmall):
        check_q_range(ref, sol.G, small, tol=1e-12)


def test_exact_zeta_rejects_tiny_q_range(ref, coarse):
    g, sol = coarse
    with pytest.raises(ValidationError):
        solve_zeta_exact(ref, sol.G, g, q_max=3, eta=0.1)


# -- convergence and serialisation ---------------------------------------------------------------


@pytest.fixture(scope="module")
def ladder(ref):
    return [solve_all(ref, GridSpec.build(ref, dt)) for dt in (0.01, 0.005, 0.0025)]


@pytest.mark.parametrize("name", ["theta", "omega"])
def test_richardson_order(ladder, name):
    order, e1, e2 = richardson([getattr(s, name) for s in ladder])
    assert order >= 0.8, (order, e1, e2)


@pytest.mark.parametrize("name", ["zeta1", "zeta0"])
def test_richardson_order_indicator_fields(ladder, name):
    # the G_minus zero set is tangent to a characteristic near (2.44, 0.79),
    # so these fields converge in mean but not uniformly
    order, _, _ = richardson([getattr(s, name) for s in ladder], norm="mean")
    assert order >= 0.8
    with pytest.raises(ValidationError):
        richardson([getattr(s, name) for s in ladder], norm="l7")


def test_value_grid_roundtrip(ref, tmp_path):
    g = GridSpec.build(ref, 0.05)
    th = solve_theta(ref, g)
    th.to_csv(tmp_path / "theta.csv")
    back = ValueGrid.from_csv(tmp_path / "theta.csv")
    assert np.array_equal(back.values, th.values) and back.grid == g


def test_zeta_roundtrip(ref, coarse, tmp_path):
    g, sol = coarse
    z = solve_zeta_exact(ref, sol.G, g, q_max=4, eta=0.1)
    z.to_csv(tmp_path / "zeta.csv")
    back = ZetaField.from_csv(tmp_path / "zeta.csv")
    assert np.array_equal(back.values, z.values) and back.q_max == 4 and back.eta == 0.1


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(0.5, 3.0), st.floats(-0.9, 0.9))
def test_fields_bounded_and_signed(alpha, rate, rho):
    p = reference_model(alpha=alpha, rho=rho, dist_plus=RenewalDist.exponential(rate), horizon=1.0)
    sol = solve_all(p, GridSpec.build(p, 0.05))
    assert sol.omega.values.min() >= 0.0 and sol.zeta0.values.min() >= 0.0
    bound = 2 * p.delta * p.horizon * p.sigma2_max
    assert np.max(np.abs(sol.theta.values)) <= bound
    assert np.all(sol.zeta1.values**2 <= sol.zeta0.values + 1e-12)
