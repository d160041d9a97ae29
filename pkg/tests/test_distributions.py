import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from mrpmm.distributions import RenewalDist, bisect_isf
from mrpmm.errors import ValidationError

FAMILIES = [
    RenewalDist.exponential(1.7),
    RenewalDist.weibull(1.5, 0.4),
    RenewalDist.gamma(2.5, 0.3),
    RenewalDist.empirical([0.0, 0.2, 0.5, 1.5], [0.0, 0.3, 0.8, 1.0]),
]
SCIPY = [stats.expon(scale=1 / 1.7), stats.weibull_min(1.5, scale=0.4), stats.gamma(2.5, scale=0.3), None]


@pytest.mark.parametrize("dist,ref", list(zip(FAMILIES[:3], SCIPY[:3])), ids=["exp", "weibull", "gamma"])
def test_parametric_laws_match_scipy(dist, ref):
    x = np.linspace(0.0, 3.0, 61)
    assert np.allclose(dist.sf(x), ref.sf(x), rtol=1e-12, atol=1e-300)
    assert np.allclose(dist.pdf(x[1:]), ref.pdf(x[1:]), rtol=1e-10)
    u = np.linspace(0.01, 0.99, 25)
    assert np.allclose(dist.isf(u), ref.isf(u), rtol=1e-9)
    assert dist.mean() == pytest.approx(ref.mean(), rel=1e-12)


@pytest.mark.parametrize("dist", FAMILIES, ids=["exp", "weibull", "gamma", "empirical"])
def test_mean_is_integral_of_survival(dist):
    val, _ = integrate.quad(dist.sf, 0, np.inf, limit=200)
    assert dist.mean() == pytest.approx(val, rel=1e-7)


@pytest.mark.parametrize("dist", FAMILIES, ids=["exp", "weibull", "gamma", "empirical"])
def test_samples_pass_ks(dist, rng):
    x = dist.sample(rng, 20_000)
    assert stats.kstest(x, dist.cdf).pvalue > 0.001


def test_empirical_isf_inverts_sf():
    d = FAMILIES[3]
    u = np.linspace(0.05, 0.95, 19)
    assert np.allclose(d.sf(d.isf(u)), u, atol=1e-10)


def test_empirical_density_is_piecewise_slope():
    d = FAMILIES[3]
    assert np.allclose(d.pdf([0.1, 0.3, 1.0, 2.0]), [1.5, 5 / 3, 0.2, 0.0])


def test_bisect_isf_on_exponential():
    u = np.array([0.9, 0.5, 1e-6])
    x = bisect_isf(lambda s: np.exp(-2.0 * s), u)
    assert np.allclose(x, -np.log(u) / 2.0, rtol=1e-9)


@pytest.mark.parametrize("family,params", [
    ("exponential", {"rate": -1.0}),
    ("weibull", {"shape": 1.0}),
    ("lognormal", {"mu": 0.0}),
    ("empirical", {"knots": [0.0, 1.0], "cdf": [0.0, 0.9]}),
    ("empirical", {"knots": [0.0, 1.0, 0.5], "cdf": [0.0, 0.5, 1.0]}),
])
def test_invalid_laws_rejected(family, params):
    with pytest.raises(ValidationError):
        RenewalDist(family, params)


@pytest.mark.parametrize("dist", FAMILIES, ids=["exp", "weibull", "gamma", "empirical"])
def test_dict_roundtrip(dist):
    assert RenewalDist.from_dict(dist.to_dict()) == dist


@settings(max_examples=50, deadline=None)
@given(st.floats(0.3, 4.0), st.floats(0.05, 3.0), st.floats(1e-6, 1 - 1e-6))
def test_weibull_isf_roundtrip(shape, scale, u):
    d = RenewalDist.weibull(shape, scale)
    assert float(d.sf(d.isf(u))) == pytest.approx(u, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.05, 2.0))
def test_gamma_survival_monotone(shape, scale):
    x = np.linspace(0.0, 10.0, 300)
    sf = RenewalDist.gamma(shape, scale).sf(x)
    assert sf[0] == pytest.approx(1.0) and np.all(np.diff(sf) <= 0)
