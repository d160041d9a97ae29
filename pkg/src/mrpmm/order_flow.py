"""Marked Cox trade flow subordinated to the elapsed time of the price.

Small market orders arrive at rate ``lambda(S_t)``; each one hits the strong
side (concordant with the last jump) with probability ``(1 + rho) / 2``.
The agent's executed quantity on each side follows a fill distribution on
``{0, ..., L}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ThinningBoundViolated, ValidationError

INTENSITY_FAMILIES = ("constant", "exp_decay", "table")


@dataclass(frozen=True)
class TradeIntensitySpec:
    """Trade intensity ``lambda(s)`` as a function of elapsed time.

    ``constant``: ``{"level": c}``; ``exp_decay``: ``{"lam0", "a", "k"}`` for
    ``lam0 + a * exp(-k s)``; ``table``: ``{"knots", "values"}`` linearly
    interpolated and held flat past the last knot.
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.params
        if self.family == "constant":
            if p.get("level", -1) < 0:
                raise ValidationError("constant intensity needs level >= 0")
        elif self.family == "exp_decay":
            if not all(k in p for k in ("lam0", "a", "k")):
                raise ValidationError("exp_decay needs lam0, a, k")
            if p["lam0"] < 0 or p["lam0"] + p["a"] < 0 or p["k"] < 0:
                raise ValidationError("exp_decay intensity must stay nonnegative")
        elif self.family == "table":
            x = np.asarray(p.get("knots", []), dtype=float)
            v = np.asarray(p.get("values", []), dtype=float)
            if x.ndim != 1 or x.size < 1 or x.shape != v.shape:
                raise ValidationError("table needs equal-length knots and values")
            if np.any(np.diff(x) <= 0) or np.any(v < 0):
                raise ValidationError("table knots must increase and values be >= 0")
            object.__setattr__(self, "params", {"knots": x.tolist(), "values": v.tolist()})
            return
        else:
            raise ValidationError(f"unknown intensity family {self.family!r}")
        object.__setattr__(self, "params", {k: float(v) for k, v in p.items()})

    @classmethod
    def constant(cls, level):
        return cls("constant", {"level": level})

    @classmethod
    def exp_decay(cls, lam0, a, k):
        return cls("exp_decay", {"lam0": lam0, "a": a, "k": k})

    @classmethod
    def table(cls, knots, values):
        return cls("table", {"knots": list(knots), "values": list(values)})

    def __call__(self, s):
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        p = self.params
        if self.family == "constant":
            return np.full(s.shape, p["level"]) if s.ndim else np.float64(p["level"])
        if self.family == "exp_decay":
            return p["lam0"] + p["a"] * np.exp(-p["k"] * s)
        return np.interp(s, p["knots"], p["values"])

    def cumulative(self, s, s_cap=np.inf):
        """``int_0^s lambda(u) du`` with ``lambda`` frozen beyond ``s_cap``."""
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        sc = np.minimum(s, s_cap)
        p = self.params
        if self.family == "constant":
            base = p["level"] * sc
        elif self.family == "exp_decay":
            k = p["k"]
            decay = p["a"] * sc if k == 0 else p["a"] * (-np.expm1(-k * sc)) / k
            base = p["lam0"] * sc + decay
        else:
            x = np.asarray(p["knots"])
            v = np.asarray(p["values"])
            if x[0] > 0:
                x = np.concatenate([[0.0], x])
                v = np.concatenate([[v[0]], v])
            cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(x))])
            idx = np.clip(np.searchsorted(x, sc, side="right") - 1, 0, len(x) - 1)
            ds = sc - x[idx]
            nxt = np.minimum(idx + 1, len(x) - 1)
            slope = np.where(nxt > idx, (v[nxt] - v[idx]) / np.where(nxt > idx, x[nxt] - x[idx], 1.0), 0.0)
            base = cum[idx] + v[idx] * ds + 0.5 * slope * ds**2
        if np.isfinite(s_cap):
            base = base + self(s_cap) * np.maximum(s - s_cap, 0.0)
        return base

    def max_on(self, s_max, n=4001):
        grid = np.linspace(0.0, s_max, n)
        vals = self(grid)
        if self.family == "table":
            knots = np.asarray(self.params["knots"])
            vals = np.concatenate([vals, self(knots[knots <= s_max])])
        return float(np.max(vals))

    def to_dict(self):
        return {"family": self.family, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], dict(d["params"]))


@dataclass(frozen=True)
class FillDist:
    """Distribution of the executed quantity of a size-L limit order."""

    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValidationError("fill distribution needs at least {0, 1}")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValidationError("fill probabilities must be >= 0 and sum to 1")
        object.__setattr__(self, "probs", tuple(float(x) for x in p))

    @classmethod
    def degenerate(cls, L):
        return cls(tuple([0.0] * L + [1.0]))

    @classmethod
    def uniform(cls, L):
        return cls(tuple([1.0 / (L + 1)] * (L + 1)))

    @property
    def lot_size(self):
        return len(self.probs) - 1

    @property
    def pmf(self):
        return np.asarray(self.probs)

    @property
    def m1(self):
        return float(np.dot(np.arange(len(self.probs)), self.probs))

    @property
    def m2(self):
        return float(np.dot(np.arange(len(self.probs)) ** 2, self.probs))

    def to_list(self):
        return list(self.probs)


@dataclass(frozen=True)
class TradeEvent:
    time: float
    side: int  # Z_k: +1 trade at the ask, -1 at the bid
    gamma: int  # Z_k * I_{theta_k-}: +1 strong side, -1 weak side


def side_intensity(params, side, s):
    """Concordant (side=+1) or discordant (side=-1) trade intensity."""
    if side not in (1, -1):
        raise ValidationError("side must be +1 or -1")
    return 0.5 * (1.0 + side * params.rho) * params.lam(s)


def draw_fill(fill_dist, rng, size=None):
    pmf = fill_dist.pmf
    return rng.choice(len(pmf), size=size, p=pmf)


def _state_before(price_path, times):
    """Last-jump direction and elapsed time just before each of ``times``."""
    jt = price_path.jump_times
    idx = np.searchsorted(jt, times, side="left") - 1  # jumps strictly before
    dirs = np.concatenate([[price_path.i0], price_path.directions])
    last = np.where(idx >= 0, jt[np.maximum(idx, 0)], -price_path.s0)
    return dirs[idx + 1], times - last


def simulate_trade_arrays(price_path, params, rng):
    """Thinning against ``lambda_max``; returns (times, Z, Gamma) arrays."""
    T = price_path.horizon
    lam_max = params.lambda_max
    n = rng.poisson(lam_max * T) if T > 0 else 0
    cand = np.sort(rng.random(n) * T)
    i_before, s_before = _state_before(price_path, cand)
    lam = params.lam(s_before)
    if np.any(lam > lam_max * (1 + 1e-12)):
        raise ThinningBoundViolated(f"lambda reached {lam.max()} > bound {lam_max}")
    keep = rng.random(n) * lam_max < lam
    times = cand[keep]
    gam = np.where(rng.random(times.size) < 0.5 * (1.0 + params.rho), 1, -1)
    z = gam * i_before[keep]
    return times, z.astype(int), gam.astype(int)


def simulate_trades(price_path, params, rng):
    """Marked Cox trade events on ``[0, horizon]`` given a price path."""
    t, z, g = simulate_trade_arrays(price_path, params, rng)
    return [TradeEvent(float(a), int(b), int(c)) for a, b, c in zip(t, z, g)]


def compensator(price_path, params, t0, t1):
    """``int_{t0}^{t1} lambda(S_u) du`` along the price path (vectorised)."""
    t0 = np.asarray(t0, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    jt = price_path.jump_times
    anchors = np.concatenate([[-price_path.s0], jt])
    cap = params.s_max
    cum_jumps = params.lambda_spec.cumulative(np.diff(anchors), cap)
    cum_at_anchor = np.concatenate([[0.0], np.cumsum(cum_jumps)])

    def big_lambda(t):
        k = np.searchsorted(jt, t, side="left")  # anchor index of the segment
        return cum_at_anchor[k] + params.lambda_spec.cumulative(t - anchors[k], cap)

    return big_lambda(t1) - big_lambda(t0)
