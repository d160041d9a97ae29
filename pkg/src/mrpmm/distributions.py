"""Inter-arrival distributions for the renewal part of the price model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import SamplerFailure, ValidationError

FAMILIES = ("exponential", "weibull", "gamma", "empirical")

_REQUIRED = {
    "exponential": ("rate",),
    "weibull": ("shape", "scale"),
    "gamma": ("shape", "scale"),
    "empirical": ("knots", "cdf"),
}


def bisect_isf(sf, target, lo=0.0, hi=None, tol=1e-12, max_iter=200):
    """Vectorised bisection for ``sf(x) = target`` with ``sf`` nonincreasing.

    Returns the smallest ``x`` (to ``tol``) with ``sf(x) <= target``.
    """
    target = np.asarray(target, dtype=float)
    lo = np.full(target.shape, float(lo))
    if hi is None:
        hi = np.maximum(lo + 1.0, 1.0)
        for _ in range(200):
            bad = sf(hi) > target
            if not np.any(bad):
                break
            hi = np.where(bad, 2.0 * hi, hi)
        else:
            raise SamplerFailure("could not bracket the inverse survival")
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    for _ in range(max_iter):
        if np.all(hi - lo <= tol * np.maximum(1.0, hi)):
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        above = sf(mid) > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    raise SamplerFailure("bisection did not converge")


@dataclass(frozen=True)
class RenewalDist:
    """A continuous inter-arrival law on [0, inf) with F(0) = 0.

    ``params`` holds the family parameters by name: ``rate`` for exponential,
    ``shape``/``scale`` for Weibull and gamma, ``knots``/``cdf`` for the
    piecewise-linear empirical CDF.
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown renewal family {self.family!r}")
        missing = [k for k in _REQUIRED[self.family] if k not in self.params]
        if missing:
            raise ValidationError(f"{self.family} needs parameters {missing}")
        if self.family == "empirical":
            x = np.asarray(self.params["knots"], dtype=float)
            F = np.asarray(self.params["cdf"], dtype=float)
            if x.ndim != 1 or x.shape != F.shape or x.size < 2:
                raise ValidationError("empirical knots/cdf must be equal-length 1d arrays")
            if x[0] != 0.0 or F[0] != 0.0 or F[-1] != 1.0:
                raise ValidationError("empirical CDF must start at (0, 0) and end at 1")
            if np.any(np.diff(x) <= 0) or np.any(np.diff(F) < 0):
                raise ValidationError("empirical knots must increase and cdf must not decrease")
            object.__setattr__(self, "params", {"knots": x.tolist(), "cdf": F.tolist()})
        else:
            for k, v in self.params.items():
                if not (np.isfinite(v) and v > 0):
                    raise ValidationError(f"{self.family} parameter {k} must be positive")
            object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})

    # constructors
    @classmethod
    def exponential(cls, rate):
        return cls("exponential", {"rate": rate})

    @classmethod
    def weibull(cls, shape, scale):
        return cls("weibull", {"shape": shape, "scale": scale})

    @classmethod
    def gamma(cls, shape, scale):
        return cls("gamma", {"shape": shape, "scale": scale})

    @classmethod
    def empirical(cls, knots, cdf):
        return cls("empirical", {"knots": list(knots), "cdf": list(cdf)})

    @property
    def _frozen(self):
        p = self.params
        if self.family == "gamma":
            return stats.gamma(a=p["shape"], scale=p["scale"])
        raise AttributeError(self.family)

    def sf(self, s):
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        p = self.params
        if self.family == "exponential":
            return np.exp(-p["rate"] * s)
        if self.family == "weibull":
            return np.exp(-((s / p["scale"]) ** p["shape"]))
        if self.family == "gamma":
            return self._frozen.sf(s)
        return 1.0 - np.interp(s, p["knots"], p["cdf"], right=1.0)

    def cdf(self, s):
        return 1.0 - self.sf(s)

    def pdf(self, s):
        s = np.asarray(s, dtype=float)
        p = self.params
        pos = s >= 0
        if self.family == "exponential":
            out = p["rate"] * np.exp(-p["rate"] * np.maximum(s, 0.0))
        elif self.family == "weibull":
            k, lam = p["shape"], p["scale"]
            z = np.maximum(s, 0.0) / lam
            with np.errstate(divide="ignore"):
                out = (k / lam) * z ** (k - 1.0) * np.exp(-(z**k))
        elif self.family == "gamma":
            out = self._frozen.pdf(np.maximum(s, 0.0))
        else:
            x = np.asarray(p["knots"])
            F = np.asarray(p["cdf"])
            slopes = np.diff(F) / np.diff(x)
            idx = np.clip(np.searchsorted(x, s, side="right") - 1, 0, len(slopes) - 1)
            out = np.where(s < x[-1], slopes[idx], 0.0)
        return np.where(pos, out, 0.0)

    def isf(self, u):
        """Inverse survival: the ``x`` with ``sf(x) = u`` for ``u`` in (0, 1]."""
        u = np.asarray(u, dtype=float)
        p = self.params
        if self.family == "exponential":
            return -np.log(u) / p["rate"]
        if self.family == "weibull":
            return p["scale"] * (-np.log(u)) ** (1.0 / p["shape"])
        if self.family == "gamma":
            return self._frozen.isf(u)
        return bisect_isf(self.sf, u, hi=p["knots"][-1])

    def mean(self):
        p = self.params
        if self.family == "exponential":
            return 1.0 / p["rate"]
        if self.family == "weibull":
            from math import gamma

            return p["scale"] * gamma(1.0 + 1.0 / p["shape"])
        if self.family == "gamma":
            return p["shape"] * p["scale"]
        x = np.asarray(p["knots"])
        F = np.asarray(p["cdf"])
        # E[S] = integral of the survival; exact for a piecewise-linear CDF
        return float(np.sum(np.diff(x) * (1.0 - 0.5 * (F[1:] + F[:-1]))))

    def sample(self, rng, size=None):
        return self.isf(1.0 - rng.random(size))

    def to_dict(self):
        return {"family": self.family, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], dict(d["params"]))
