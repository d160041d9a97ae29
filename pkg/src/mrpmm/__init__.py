"""Market making on a Markov-renewal mid-price: models, solvers, backtests, calibration."""

__version__ = "0.1.0"

from .errors import MRPError  # noqa: F401
from .model import MarketState, ModelParams, PortfolioState  # noqa: F401
from .presets import poisson_model, reference_model  # noqa: F401
