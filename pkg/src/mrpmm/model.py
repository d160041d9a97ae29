"""Markov-renewal mid-price model: parameters, hazards and jump sampling.

The mid-price moves by one tick ``2 delta`` at renewal times.  The direction
of each jump relative to the previous one is ``B_n = +1`` (same direction)
with probability ``(1 + alpha) / 2`` and the inter-arrival time is drawn from
``F_+`` or ``F_-`` according to ``B_n``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .distributions import RenewalDist, bisect_isf
from .errors import SamplerFailure, TailUnderflow, ValidationError
from .order_flow import FillDist, TradeIntensitySpec

SCHEMA_VERSION = "mrpmm.params/1"
TAIL_QUANTILE = 1e-4  # survival level at which the s-axis is truncated
SURVIVAL_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelParams:
    delta: float
    alpha: float
    dist_plus: RenewalDist
    dist_minus: RenewalDist
    lambda_spec: TradeIntensitySpec
    rho: float
    fill_plus: FillDist
    fill_minus: FillDist
    lot_size: int = 1
    fee: float = 0.0
    eta: float = 0.0
    horizon: float = 1.0

    def __post_init__(self):
        if not -1.0 <= self.alpha < 1.0:
            raise ValidationError("alpha must lie in [-1, 1)")
        if not -1.0 < self.rho < 1.0:
            raise ValidationError("rho must lie in (-1, 1)")
        if self.delta <= 0:
            raise ValidationError("delta must be positive")
        if self.fee < 0 or self.eta < 0:
            raise ValidationError("fee and eta must be nonnegative")
        if self.horizon <= 0:
            raise ValidationError("horizon must be positive")
        if int(self.lot_size) != self.lot_size or self.lot_size < 1:
            raise ValidationError("lot_size must be a positive integer")
        for fd in (self.fill_plus, self.fill_minus):
            if fd.lot_size != self.lot_size:
                raise ValidationError("fill distributions must live on {0, ..., L}")

    # weights of the two inter-arrival classes
    @property
    def w_plus(self):
        return 0.5 * (1.0 + self.alpha)

    @property
    def w_minus(self):
        return 0.5 * (1.0 - self.alpha)

    def survival(self, s):
        """``1 - F(s)`` for the pooled renewal law."""
        return self.w_plus * self.dist_plus.sf(s) + self.w_minus * self.dist_minus.sf(s)

    @cached_property
    def s_max(self):
        """Truncation point of the elapsed-time axis (F-quantile ``1 - 1e-4``)."""
        return float(bisect_isf(self.survival, np.array(TAIL_QUANTILE)))

    def hazards(self, s):
        """``(h_plus, h_minus)`` with the frozen-tail closure beyond ``s_max``."""
        s = np.minimum(np.asarray(s, dtype=float), self.s_max)
        surv = self.survival(s)
        hp = self.w_plus * self.dist_plus.pdf(s) / surv
        hm = self.w_minus * self.dist_minus.pdf(s) / surv
        return hp, hm

    def lam(self, s):
        return self.lambda_spec(np.minimum(np.asarray(s, dtype=float), self.s_max))

    @cached_property
    def lambda_max(self):
        return self.lambda_spec.max_on(self.s_max)

    @cached_property
    def sigma2_max(self):
        grid = np.linspace(0.0, self.s_max, 4001)
        hp, hm = self.hazards(grid)
        return float(np.max(hp + hm))

    @property
    def mean_interarrival(self):
        return self.w_plus * self.dist_plus.mean() + self.w_minus * self.dist_minus.mean()

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "delta": self.delta,
            "alpha": self.alpha,
            "dist_plus": self.dist_plus.to_dict(),
            "dist_minus": self.dist_minus.to_dict(),
            "lambda_spec": self.lambda_spec.to_dict(),
            "rho": self.rho,
            "fill_plus": self.fill_plus.to_list(),
            "fill_minus": self.fill_minus.to_list(),
            "lot_size": self.lot_size,
            "fee": self.fee,
            "eta": self.eta,
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, d):
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValidationError(f"unsupported params schema {version!r}")
        try:
            return cls(
                delta=float(d["delta"]),
                alpha=float(d["alpha"]),
                dist_plus=RenewalDist.from_dict(d["dist_plus"]),
                dist_minus=RenewalDist.from_dict(d["dist_minus"]),
                lambda_spec=TradeIntensitySpec.from_dict(d["lambda_spec"]),
                rho=float(d["rho"]),
                fill_plus=FillDist(tuple(d["fill_plus"])),
                fill_minus=FillDist(tuple(d["fill_minus"])),
                lot_size=int(d["lot_size"]),
                fee=float(d["fee"]),
                eta=float(d["eta"]),
                horizon=float(d["horizon"]),
            )
        except KeyError as exc:
            raise ValidationError(f"missing field {exc.args[0]!r}") from None

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def fingerprint(self):
        """SHA-256 over the canonical JSON encoding."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


@dataclass(frozen=True)
class MarketState:
    t: float
    p: float
    i: int
    s: float
    p0: float = 0.0
    delta: float = 0.5

    def __post_init__(self):
        if self.i not in (1, -1):
            raise ValidationError("direction i must be +1 or -1")
        if self.s < 0:
            raise ValidationError("elapsed time must be nonnegative")
        ticks = (self.p - self.p0) / (2 * self.delta)
        if abs(ticks - round(ticks)) > 1e-9:
            raise ValidationError("price is off the 2*delta grid")


@dataclass
class PortfolioState:
    x: float = 0.0
    y: int = 0

    def strong_inventory(self, i):
        return i * self.y


# -- single-function views of the primitives ---------------------------------


def mid_price(p0, delta, ticks):
    """Mid-price from an integer tick count; the one formula used everywhere."""
    return p0 + (2.0 * delta) * ticks


def substream(seed, index):
    """Independent generator for ``index`` under master ``seed`` (Philox key split)."""
    seed, index = int(seed), int(index)
    if not 0 <= seed < 2**64 or not 0 <= index < 2**64:
        raise ValidationError("seed and stream index must be unsigned 64-bit integers")
    return np.random.Generator(np.random.Philox(key=(seed << 64) | index))


def _check_side(side):
    if side not in (1, -1):
        raise ValidationError("side must be +1 or -1")


def _raw_survival(params, s):
    surv = params.survival(s)
    if np.any(surv < SURVIVAL_FLOOR):
        raise TailUnderflow(f"1 - F(s) = {np.min(surv):.3g} below floor at s = {np.max(s)}")
    return surv


def hazard(params, side, s):
    """Jump intensity in the same (+1) or opposite (-1) direction at elapsed ``s``."""
    _check_side(side)
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValidationError("s must be nonnegative")
    surv = _raw_survival(params, s)
    if side == 1:
        return params.w_plus * params.dist_plus.pdf(s) / surv
    return params.w_minus * params.dist_minus.pdf(s) / surv


def drift_vol(params, s):
    """Trend ``mu = h+ - h-`` and agitation ``sigma2 = h+ + h-``."""
    hp = hazard(params, 1, s)
    hm = hazard(params, -1, s)
    return hp - hm, hp + hm


def tilde_alpha(params, s):
    """Mean next-jump direction given survival to ``s`` after an up-jump."""
    surv = _raw_survival(params, np.asarray(s, dtype=float))
    return (
        params.w_plus * params.dist_plus.sf(s) - params.w_minus * params.dist_minus.sf(s)
    ) / surv


def theta_infinity(params, s):
    return 2.0 * params.delta * tilde_alpha(params, s) / (1.0 - params.alpha)


def sample_next_jump(state, params, rng, frozen_tail=False):
    """Draw ``(wait, new_direction)`` from the state ``(i, s)``.

    ``state`` may hold arrays.  With ``frozen_tail`` the hazards are held at
    their ``s_max`` values past the truncation point, which is the process
    the grid solvers describe.
    """
    i, s = state
    i = np.asarray(i)
    s = np.asarray(s, dtype=float)
    scalar = np.broadcast(i, s).shape == ()
    i, s = np.atleast_1d(i), np.atleast_1d(s)
    shape = np.broadcast(i, s).shape
    s = np.broadcast_to(s, shape)
    smax = params.s_max
    s_in = np.minimum(s, smax) if frozen_tail else s

    sf_p = params.dist_plus.sf(s_in)
    sf_m = params.dist_minus.sf(s_in)
    pp = params.w_plus * sf_p
    pm = params.w_minus * sf_m
    tot = pp + pm
    if not frozen_tail and np.any(tot < SURVIVAL_FLOOR):
        raise TailUnderflow("cannot condition on survival this far in the tail")
    prob_plus = np.where(tot > 0, pp / np.where(tot > 0, tot, 1.0), 0.5)
    b = np.where(rng.random(shape) < prob_plus, 1, -1)
    u = 1.0 - rng.random(shape)
    target = u * np.where(b == 1, sf_p, sf_m)
    with np.errstate(divide="ignore"):
        end_p = params.dist_plus.isf(np.where(b == 1, target, 0.5))
        end_m = params.dist_minus.isf(np.where(b == 1, 0.5, target))
    wait = np.where(b == 1, end_p, end_m) - s_in
    if frozen_tail:
        hp, hm = params.hazards(smax)
        rate = float(hp + hm)
        tail = (s >= smax) | (s_in + wait > smax)
        if np.any(tail):
            n = int(np.count_nonzero(tail))
            extra = rng.exponential(1.0 / rate, size=n)
            bt = np.where(rng.random(n) < float(hp) / rate, 1, -1)
            w = wait.copy()
            w[tail] = np.maximum(smax - s[tail], 0.0) + extra
            wait = w
            b = b.copy()
            b[tail] = bt
    if np.any(~np.isfinite(wait)):
        raise SamplerFailure("non-finite waiting time")
    wait = np.maximum(wait, np.finfo(float).tiny)
    new_dir = b * i
    if scalar:
        return float(wait[0]), int(new_dir[0])
    return wait, new_dir.astype(int)


@dataclass
class PricePath:
    """Jump times and absolute directions of one mid-price path on [0, horizon]."""

    jump_times: np.ndarray
    directions: np.ndarray
    horizon: float
    i0: int = 1
    s0: float = 0.0
    p0: float = 0.0
    delta: float = 0.5
    marks: np.ndarray = field(default=None)  # B_n = J_n J_{n-1}

    @property
    def ticks(self):
        return np.cumsum(self.directions)

    def prices(self):
        """Mid-price right after each jump, computed from integer ticks."""
        return mid_price(self.p0, self.delta, self.ticks)

    def terminal_price(self):
        return mid_price(self.p0, self.delta, int(np.sum(self.directions)))


def simulate_jumps(params, horizon, rng, i0=1, s0=0.0, p0=0.0, frozen_tail=True):
    """Simulate the mid-price jump sequence on ``[0, horizon]``."""
    times, marks = [], []
    if horizon > 0:
        w, d = sample_next_jump((1, s0), params, rng, frozen_tail=frozen_tail)
        t = w
        if t <= horizon:
            times.append(np.array([t]))
            marks.append(np.array([d]))
            batch = max(16, int(2 * horizon / params.mean_interarrival) + 16)
            while t <= horizon:
                waits, b = sample_next_jump(
                    (np.ones(batch, dtype=int), np.zeros(batch)), params, rng, frozen_tail=frozen_tail
                )
                tt = t + np.cumsum(waits)
                times.append(tt)
                marks.append(b)
                t = tt[-1]
    jt = np.concatenate(times) if times else np.zeros(0)
    b = np.concatenate(marks).astype(int) if marks else np.zeros(0, dtype=int)
    keep = jt <= horizon
    jt, b = jt[keep], b[keep]
    dirs = i0 * np.cumprod(b) if b.size else b
    return PricePath(jt, dirs.astype(int), float(horizon), int(i0), float(s0), float(p0), params.delta, b)
