"""Estimators for every model primitive from tick tapes.

All estimators accept a single :class:`~mrpmm.tape.EventTape` or a list of
independent tapes, in which case the sufficient statistics are pooled.  Only
the part of a tape after its first price jump is used wherever the state
``(I, S)`` is needed, since the state before it is not observed.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .errors import InsufficientData, OptimizerNotConverged
from .tape import EventTape

TickTape = EventTape  # the calibration input is the same merged jump/trade tape

MIN_PER_BIN = 30
N_STARTS = 5


def _tapes(tape):
    tapes = list(tape) if isinstance(tape, (list, tuple)) else [tape]
    for t in tapes:
        if not isinstance(t, EventTape):
            raise TypeError("expected EventTape objects")
    return tapes


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    if v.size < 2:
        return float(v.mean()), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


# -- price model -----------------------------------------------------------------


def _marks_and_gaps(tapes):
    """Marks ``B_n = J_n J_{n-1}`` and inter-arrivals ``S_n = T_n - T_{n-1}``, n >= 2."""
    marks, gaps = [], []
    for t in tapes:
        jt, jd = t.jumps()
        marks.append(jd[1:] * jd[:-1])
        gaps.append(np.diff(jt))
    return np.concatenate(marks).astype(int), np.concatenate(gaps)


def estimate_alpha(tape):
    """Sample mean of the jump marks and its standard error."""
    b, _ = _marks_and_gaps(_tapes(tape))
    if b.size < 1:
        raise InsufficientData("need at least two jumps")
    if b.size == 1:
        return float(b[0]), float("nan")
    if np.all(b == b[0]):
        warnings.warn("all jump marks are equal; the standard error is zero", RuntimeWarning, stacklevel=2)
        return float(b[0]), 0.0
    return _mean_se(b)


@dataclass
class RenewalEstimate:
    """Empirical inter-arrival laws and binned hazards on the pooled-quantile axis."""

    samples_plus: np.ndarray
    samples_minus: np.ndarray
    bin_edges: np.ndarray
    exposure: np.ndarray
    events_plus: np.ndarray
    events_minus: np.ndarray
    flags: list = field(default_factory=list)

    @staticmethod
    def _ecdf(sample, s):
        if sample is None or sample.size == 0:
            return None
        return np.searchsorted(np.sort(sample), s, side="right") / sample.size

    def F_plus(self, s):
        return self._ecdf(self.samples_plus, np.asarray(s, dtype=float))

    def F_minus(self, s):
        return self._ecdf(self.samples_minus, np.asarray(s, dtype=float))

    def pooled_cdf(self, s):
        allv = np.concatenate([self.samples_plus, self.samples_minus])
        return self._ecdf(allv, np.asarray(s, dtype=float))

    @property
    def alpha_hat(self):
        n_p, n_m = self.samples_plus.size, self.samples_minus.size
        return (n_p - n_m) / (n_p + n_m)

    @property
    def bin_mid(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def h_plus(self):
        return self.events_plus / self.exposure

    @property
    def h_minus(self):
        return self.events_minus / self.exposure

    @property
    def se_plus(self):
        return np.sqrt(self.events_plus) / self.exposure

    @property
    def se_minus(self):
        return np.sqrt(self.events_minus) / self.exposure

    def to_dict(self):
        return {
            "n_plus": int(self.samples_plus.size),
            "n_minus": int(self.samples_minus.size),
            "bin_edges": self.bin_edges.tolist(),
            "exposure": self.exposure.tolist(),
            "h_plus": self.h_plus.tolist(),
            "h_minus": self.h_minus.tolist(),
            "se_plus": self.se_plus.tolist(),
            "se_minus": self.se_minus.tolist(),
            "flags": list(self.flags),
        }


def _quantile_edges(x, n_bins):
    qs = np.quantile(x, np.linspace(0.0, 1.0, n_bins + 1))
    qs[0] = 0.0
    qs[-1] = np.inf
    return np.unique(qs)


def estimate_renewal(tape, max_bins=40):
    """Split inter-arrivals by the sign of ``B_n`` and bin hazards by occurrence/exposure.

    Bins are quantiles of the pooled inter-arrival sample, so each holds about
    the same number of completed waits; there are at most ``n / 30`` bins.
    """
    b, s = _marks_and_gaps(_tapes(tape))
    if s.size < 2:
        raise InsufficientData("need at least two inter-arrival times")
    flags = []
    sp, sm = s[b == 1], s[b == -1]
    if sp.size == 0:
        flags.append("F_plus undefined: no same-direction jumps")
    if sm.size == 0:
        flags.append("F_minus undefined: no reversals")
    n_bins = int(max(1, min(max_bins, s.size // MIN_PER_BIN)))
    edges = _quantile_edges(s, n_bins)
    lo, hi = edges[:-1], edges[1:]
    exposure = np.array([np.sum(np.clip(s[s > a], a, c) - a) for a, c in zip(lo, hi)])
    idx = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, lo.size - 1)
    ev_p = np.bincount(idx[b == 1], minlength=lo.size).astype(float)
    ev_m = np.bincount(idx[b == -1], minlength=lo.size).astype(float)
    return RenewalEstimate(sp, sm, edges, exposure, ev_p, ev_m, flags)


# -- trade flow ------------------------------------------------------------------


def _lambda_data(tapes):
    """Elapsed times at trades and inter-jump segment lengths inside the window."""
    s_tr, seg = [], []
    for t in tapes:
        jt, _ = t.jumps()
        if jt.size == 0:
            continue
        end = float(t.meta.get("horizon", t.time[-1]))
        end = max(end, float(t.time[-1]))
        tt, _ = t.trades()
        tt = tt[tt > jt[0]]
        k = np.searchsorted(jt, tt, side="left") - 1
        s_tr.append(tt - jt[k])
        seg.append(np.diff(np.concatenate([jt, [end]])))
    if not s_tr:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(s_tr), np.concatenate(seg)


def _negloglik(theta, s, d):
    """Negative log-likelihood and gradient in log-parameters, per trade."""
    lam0, a, k = np.exp(theta)
    e_s = np.exp(-k * s)
    lam = lam0 + a * e_s
    e_d = np.exp(-k * d)
    one_m = -np.expm1(-k * d)
    comp = lam0 * d.sum() + a * one_m.sum() / k
    ll = np.sum(np.log(lam)) - comp
    g0 = np.sum(1.0 / lam) - d.sum()
    ga = np.sum(e_s / lam) - one_m.sum() / k
    gk = -a * np.sum(s * e_s / lam) - a * np.sum(k * d * e_d - one_m) / k**2
    grad = np.array([g0 * lam0, ga * a, gk * k])
    n = max(s.size, 1)
    return -ll / n, -grad / n


def _grad_natural(x, s, d):
    lam0, a, k = x
    _, g = _negloglik(np.log(np.maximum(x, 1e-300)), s, d)
    return -g * s.size / np.asarray([lam0, a, k])


@dataclass
class LambdaEstimate:
    lam0: float
    a: float
    k: float
    loglik: float
    se: tuple
    n_trades: int
    exposure: float
    grad_norm: float

    def to_dict(self):
        return asdict(self)

    def __call__(self, s):
        return self.lam0 + self.a * np.exp(-self.k * np.asarray(s, dtype=float))


BOUNDS = [(np.log(1e-8), np.log(1e6)), (np.log(1e-10), np.log(1e6)), (np.log(1e-4), np.log(1e4))]


def estimate_lambda_mle(tape, tol=1e-5):
    """Maximum likelihood for ``lambda(s) = lam0 + a exp(-k s)``.

    The compensator is integrated in closed form over each inter-jump
    segment.  L-BFGS-B runs on log-parameters from five fixed starts; standard
    errors come from the observed information (Hessian of the analytic score).
    """
    s, d = _lambda_data(_tapes(tape))
    if s.size == 0:
        raise InsufficientData("no trades after the first price jump")
    base = s.size / d.sum()
    starts = [(base / 2, base, 1.0), (base, base / 10, 0.1), (base / 4, 4 * base, 5.0),
              (0.9 * base, 0.1 * base, 10.0), (base / 2, base / 2, 0.5)][:N_STARTS]
    best = None
    for x0 in starts:
        res = optimize.minimize(_negloglik, np.log(x0), args=(s, d), jac=True, method="L-BFGS-B",
                                bounds=BOUNDS, options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-10})
        if best is None or res.fun < best.fun:
            best = res
    theta = best.x
    _, g = _negloglik(theta, s, d)
    lo = np.array([b[0] for b in BOUNDS])
    hi = np.array([b[1] for b in BOUNDS])
    free = (theta > lo + 1e-8) & (theta < hi - 1e-8)
    gnorm = float(np.linalg.norm(g[free])) if free.any() else 0.0
    if gnorm > tol:
        raise OptimizerNotConverged(f"projected gradient norm {gnorm:.3g}", best_x=np.exp(theta), grad_norm=gnorm)
    x = np.exp(theta)
    hess = np.empty((3, 3))
    for j in range(3):
        step = 1e-5 * max(x[j], 1e-8)
        up, dn = x.copy(), x.copy()
        up[j] += step
        dn[j] = max(dn[j] - step, 1e-300)
        hess[:, j] = -(_grad_natural(up, s, d) - _grad_natural(dn, s, d)) / (up[j] - dn[j])
    hess = 0.5 * (hess + hess.T)
    try:
        cov = np.linalg.inv(hess)
        se = tuple(float(np.sqrt(v)) if v > 0 else float("nan") for v in np.diag(cov))
    except np.linalg.LinAlgError:
        se = (float("nan"),) * 3
    ll = -best.fun * s.size
    return LambdaEstimate(float(x[0]), float(x[1]), float(x[2]), float(ll), se, int(s.size),
                          float(d.sum()), gnorm)


def _trade_gamma(tape):
    """``Gamma_k = Z_k I_{theta_k-}`` for trades after the first jump."""
    jt, jd = tape.jumps()
    tt, z = tape.trades()
    if jt.size == 0:
        return np.zeros(0, dtype=int)
    keep = tt > jt[0]
    k = np.searchsorted(jt, tt[keep], side="left") - 1
    return z[keep] * jd[k]


def estimate_rho(tape):
    """Sample mean of the strong-side indicator sign ``Z_k I_{theta_k-}``."""
    g = np.concatenate([_trade_gamma(t) for t in _tapes(tape)])
    if g.size == 0:
        raise InsufficientData("no trade follows a price jump")
    if g.size == 1 or np.all(g == g[0]):
        return float(g[0]), 0.0
    return _mean_se(g)


@dataclass
class FillEstimate:
    pmf_plus: np.ndarray
    pmf_minus: np.ndarray
    trades_plus: int  # E_N for the strong side
    trades_minus: int
    counts_plus: np.ndarray  # e_N(i), i = 0..L
    counts_minus: np.ndarray

    def to_dict(self):
        return {
            "pmf_plus": self.pmf_plus.tolist(),
            "pmf_minus": self.pmf_minus.tolist(),
            "trades_plus": self.trades_plus,
            "trades_minus": self.trades_minus,
            "counts_plus": self.counts_plus.tolist(),
            "counts_minus": self.counts_minus.tolist(),
        }


def estimate_vartheta(tape, lot_size=None):
    """Execution distributions from a tape recorded while quoting on both sides.

    For each inter-jump interval ``(T_{k-1}, T_k]`` the jump at ``T_k`` is one
    more trade on side ``B_k`` that filled the whole lot; the counting
    statistics remove it, so only the small trades enter ``E`` and ``e(i)``.
    ``theta(i) = e(i) / E`` for ``i >= 1`` and ``theta(0)`` takes the rest.
    """
    tapes = _tapes(tape)
    L = int(lot_size if lot_size is not None else tapes[0].meta.get("lot_size", 0))
    if L < 1:
        raise InsufficientData("lot size unknown; pass lot_size")
    E = {1: 0, -1: 0}
    e = {1: np.zeros(L + 1, dtype=np.int64), -1: np.zeros(L + 1, dtype=np.int64)}
    for t in tapes:
        jrows = np.flatnonzero(t.is_jump)
        if jrows.size < 2:
            continue
        jd = t.direction[jrows]
        marks = jd[1:] * jd[:-1]
        rows = np.arange(jrows[0] + 1, jrows[-1] + 1)
        k = np.searchsorted(jrows, rows, side="left")  # row lies in (T_{k-1}, T_k]
        sides = t.direction[rows] * jd[k - 1]  # the jump row counts as a trade on side B_k
        fills = np.minimum(t.fill[rows], L)
        for nu in (1, -1):
            m = sides == nu
            n_jump = int(np.count_nonzero(marks == nu))
            E[nu] += int(np.count_nonzero(m)) - n_jump
            cnt = np.bincount(fills[m], minlength=L + 1)
            cnt[L] -= n_jump
            e[nu] += cnt
    out = {}
    for nu in (1, -1):
        if E[nu] <= 0:
            raise InsufficientData(f"no trades between jumps on the {'strong' if nu == 1 else 'weak'} side")
        pmf = e[nu] / E[nu]
        pmf[0] = (E[nu] - e[nu][1:].sum()) / E[nu]
        e[nu][0] = E[nu] - e[nu][1:].sum()
        out[nu] = pmf
    return FillEstimate(out[1], out[-1], E[1], E[-1], e[1], e[-1])


# -- bundle ------------------------------------------------------------------------


@dataclass
class CalibrationReport:
    alpha: float
    alpha_se: float
    rho: float
    rho_se: float
    renewal: RenewalEstimate
    lam: LambdaEstimate
    fills: FillEstimate | None = None
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "alpha_se": self.alpha_se,
            "rho": self.rho,
            "rho_se": self.rho_se,
            "renewal": self.renewal.to_dict(),
            "lambda": self.lam.to_dict(),
            "fills": None if self.fills is None else self.fills.to_dict(),
            "flags": list(self.flags),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    def write_curves(self, prefix):
        """Hazard and intensity curves as CSV (``<prefix>_hazard.csv``, ``<prefix>_lambda.csv``)."""
        r = self.renewal
        with open(f"{prefix}_hazard.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s_lo", "s_hi", "quantile_lo", "h_plus", "se_plus", "h_minus", "se_minus"])
            q_lo = r.pooled_cdf(r.bin_edges[:-1])
            for row in zip(r.bin_edges[:-1], r.bin_edges[1:], q_lo, r.h_plus, r.se_plus, r.h_minus, r.se_minus):
                w.writerow([repr(float(v)) for v in row])
        finite = r.bin_edges[np.isfinite(r.bin_edges)]
        grid = np.linspace(0.0, float(finite.max()) if finite.size else 1.0, 201)
        with open(f"{prefix}_lambda.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "lambda"])
            for s, v in zip(grid, self.lam(grid)):
                w.writerow([repr(float(s)), repr(float(v))])


def calibrate(tape, with_fills=None):
    """Run every estimator; fill distributions only if the tape carries agent fills."""
    tapes = _tapes(tape)
    alpha, alpha_se = estimate_alpha(tapes)
    rho, rho_se = estimate_rho(tapes)
    renewal = estimate_renewal(tapes)
    lam = estimate_lambda_mle(tapes)
    if with_fills is None:
        with_fills = all(t.meta.get("agent_on", False) for t in tapes)
    fills = estimate_vartheta(tapes) if with_fills else None
    return CalibrationReport(alpha, alpha_se, rho, rho_se, renewal, lam, fills, list(renewal.flags))
