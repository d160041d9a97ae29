"""Reference parameter sets used by the scripts, the CLI examples and the tests."""

from .distributions import RenewalDist
from .model import ModelParams
from .order_flow import FillDist, TradeIntensitySpec


def reference_model(**overrides):
    """Mean-reverting tick model: alpha = -0.75, rho = -0.5.

    Same-direction jumps wait an exponential time, reversals a Weibull(1.5)
    time, and trades arrive at ``0.5 + 2 exp(-1.5 s)`` per second.
    """
    kw = dict(
        delta=0.5,
        alpha=-0.75,
        dist_plus=RenewalDist.exponential(1.0),
        dist_minus=RenewalDist.weibull(1.5, 0.4),
        lambda_spec=TradeIntensitySpec.exp_decay(0.5, 2.0, 1.5),
        rho=-0.5,
        fill_plus=FillDist((0.2, 0.3, 0.5)),
        fill_minus=FillDist((0.3, 0.4, 0.3)),
        lot_size=2,
        fee=0.02,
        eta=0.0,
        horizon=3.0,
    )
    kw.update(overrides)
    return ModelParams(**kw)


def poisson_model(gamma=2.0, alpha=0.0, level=1.0, **overrides):
    """Memoryless case: exponential inter-arrivals on both sides, flat trade rate."""
    kw = dict(
        delta=0.5,
        alpha=alpha,
        dist_plus=RenewalDist.exponential(gamma),
        dist_minus=RenewalDist.exponential(gamma),
        lambda_spec=TradeIntensitySpec.constant(level),
        rho=0.0,
        fill_plus=FillDist((0.0, 1.0)),
        fill_minus=FillDist((0.0, 1.0)),
        lot_size=1,
        fee=0.0,
        eta=0.0,
        horizon=2.0,
    )
    kw.update(overrides)
    return ModelParams(**kw)
