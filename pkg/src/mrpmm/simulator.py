"""Event-driven Monte-Carlo backtester and the probabilistic oracles.

The engine advances a block of independent paths in lockstep.  Each sweep
proposes one candidate event per live path: the next price jump if it comes
first, otherwise a trade candidate drawn at rate ``lambda_max`` and thinned
to ``lambda(S_t-)``.  Quotes are read from the policy at every event time
using the pre-event state ``(t, S_t-, Q_t-)``; because the feedback rules only
change with the state, this is the same as holding quotes between events.

Every sweep consumes the same random numbers whatever the policy does, so two
policies run with one seed see the same market (common random numbers).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import OutOfGrid, PolicyUndefined, QRangeExceeded, ValidationError
from .model import mid_price, sample_next_jump, substream
from .policy import HoldPolicy, Policy
from .tape import EventTape

DEFAULT_CHUNK = 25_000


@dataclass
class BacktestConfig:
    n_paths: int = 10_000
    seed: int = 0
    policy: object = None
    p0: float = 0.0
    i0: int = 1
    s0: float = 0.0
    x0: float = 0.0
    y0: int = 0
    horizon: float | None = None  # absolute end time; defaults to params.horizon
    t0: float = 0.0
    record: bool = False
    chunk_size: int = DEFAULT_CHUNK

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValidationError("n_paths must be at least 1")
        if self.i0 not in (1, -1):
            raise ValidationError("i0 must be +1 or -1")
        if self.s0 < 0:
            raise ValidationError("s0 must be nonnegative")
        if self.chunk_size < 1:
            raise ValidationError("chunk_size must be positive")


@dataclass
class BacktestReport:
    policy: str
    n_paths: int
    seed: int
    eta: float
    mean_utility: float
    se_utility: float
    mean_y: float
    var_y: float
    mean_q2: float
    fills: dict
    params_hash: str = ""
    terminal: dict = field(default_factory=dict, repr=False)  # per-path arrays
    tapes: list = field(default_factory=list, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("terminal")
        d.pop("tapes")
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def _fill_table(fd):
    return np.cumsum(fd.pmf)


def _draw_k(cdf, u):
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)


def _ask(policy, t, s, q):
    try:
        lp, lm = policy(t, s, q)
    except (OutOfGrid, QRangeExceeded) as exc:
        raise PolicyUndefined(str(exc)) from exc
    return np.asarray(lp, dtype=bool), np.asarray(lm, dtype=bool)


def _run_chunk(params, cfg, policy, n, rng, T):
    """Simulate ``n`` paths; returns terminal state arrays and optional event logs."""
    delta, fee, L = params.delta, params.fee, params.lot_size
    lam_max = params.lambda_max
    p_strong = 0.5 * (1.0 + params.rho)
    cdf_p, cdf_m = _fill_table(params.fill_plus), _fill_table(params.fill_minus)

    t = np.full(n, float(cfg.t0))
    last = t - cfg.s0
    i = np.full(n, cfg.i0, dtype=np.int64)
    ticks = np.zeros(n, dtype=np.int64)
    x = np.full(n, float(cfg.x0))
    y = np.full(n, int(cfg.y0), dtype=np.int64)
    wait, b = sample_next_jump((np.ones(n, dtype=int), np.full(n, float(cfg.s0))), params, rng, frozen_tail=True)
    nj = t + wait
    nb = b.astype(np.int64)
    alive = np.ones(n, dtype=bool)
    counts = dict(trade_events=0, trade_volume=0, jump_events=0, jump_volume=0)
    log = [] if cfg.record else None

    while True:
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        m = idx.size
        cand = t[idx] + rng.exponential(1.0 / lam_max, m)
        u_acc = rng.random(m)
        u_side = rng.random(m)
        u_fill = rng.random(m)

        jump_first = nj[idx] <= cand
        ev = np.where(jump_first, nj[idx], cand)
        over = ev > T
        alive[idx[over]] = False

        # trades
        tr = ~jump_first & ~over
        ti = idx[tr]
        s_tr = cand[tr] - last[ti]
        acc = u_acc[tr] * lam_max < params.lam(s_tr)
        t[ti] = cand[tr]
        ti, s_tr = ti[acc], s_tr[acc]
        if ti.size:
            gam = np.where(u_side[tr][acc] < p_strong, 1, -1)
            k = np.where(gam == 1, _draw_k(cdf_p, u_fill[tr][acc]), _draw_k(cdf_m, u_fill[tr][acc]))
            lp, lm = _ask(policy, t[ti], s_tr, i[ti] * y[ti])
            posted = np.where(gam == 1, lp, lm)
            z = gam * i[ti]
            k = np.where(posted, k, 0)
            f = ti[posted]
            if f.size:
                price = mid_price(cfg.p0, delta, ticks[f])
                kf, zf = k[posted], z[posted]
                x[f] = x[f] + kf * (zf * price + delta - fee)
                y[f] = y[f] - zf * kf
                counts["trade_events"] += int(np.count_nonzero(kf))
                counts["trade_volume"] += int(kf.sum())
            if log is not None:
                log.append((ti, t[ti], np.zeros(ti.size, bool), z, k, s_tr,
                            mid_price(cfg.p0, delta, ticks[ti])))

        # jumps
        jm = jump_first & ~over
        ji = idx[jm]
        if ji.size:
            tj = nj[ji]
            s_j = tj - last[ji]
            side = nb[ji]
            lp, lm = _ask(policy, tj, s_j, i[ji] * y[ji])
            posted = np.where(side == 1, lp, lm)
            jdir = side * i[ji]
            f = ji[posted]
            if f.size:
                price = mid_price(cfg.p0, delta, ticks[f])
                zf = jdir[posted]
                x[f] = x[f] + L * (zf * price + delta - fee)
                y[f] = y[f] - zf * L
                counts["jump_events"] += int(f.size)
                counts["jump_volume"] += int(f.size) * L
            ticks[ji] += jdir
            i[ji] = jdir
            last[ji] = tj
            t[ji] = tj
            w, bb = sample_next_jump((np.ones(ji.size, dtype=int), np.zeros(ji.size)), params, rng, frozen_tail=True)
            nj[ji] = tj + w
            nb[ji] = bb
            if log is not None:
                log.append((ji, tj, np.ones(ji.size, bool), jdir, np.where(posted, L, 0), s_j,
                            mid_price(cfg.p0, delta, ticks[ji])))

    return dict(x=x, y=y, ticks=ticks, i=i), counts, log


def _tapes_from_log(log, n, cfg, params, offset):
    if not log:
        cols = [np.zeros(0, dtype=int)] * 7
    else:
        cols = [np.concatenate([blk[c] for blk in log]) for c in range(7)]
    order = np.argsort(cols[0], kind="stable")  # sweeps are chronological per path
    cols = [c[order] for c in cols]
    bounds = np.searchsorted(cols[0], np.arange(n + 1))
    tapes = []
    base = {
        "i0": cfg.i0, "s0": float(cfg.s0), "p0": float(cfg.p0), "t0": float(cfg.t0),
        "delta": params.delta, "fee": params.fee, "lot_size": params.lot_size,
        "x0": float(cfg.x0), "y0": int(cfg.y0), "seed": int(cfg.seed),
        "params_hash": params.fingerprint(),
    }
    for p in range(n):
        a, b = bounds[p], bounds[p + 1]
        meta = dict(base, path=offset + p)
        tapes.append(EventTape(cols[1][a:b], cols[2][a:b], cols[3][a:b], cols[4][a:b],
                               cols[5][a:b], cols[6][a:b], meta))
    return tapes


def simulate_paths(params, config):
    """Run the engine; returns terminal arrays, fill counts and tapes."""
    policy = config.policy if config.policy is not None else HoldPolicy()
    T = params.horizon if config.horizon is None else float(config.horizon)
    if T < config.t0:
        raise ValidationError("horizon precedes t0")
    out = {k: [] for k in ("x", "y", "ticks", "i")}
    counts = dict(trade_events=0, trade_volume=0, jump_events=0, jump_volume=0)
    tapes = []
    done, chunk = 0, 0
    while done < config.n_paths:
        n = min(config.chunk_size, config.n_paths - done)
        rng = substream(config.seed, chunk)
        state, c, log = _run_chunk(params, config, policy, n, rng, T)
        for k in out:
            out[k].append(state[k])
        for k in counts:
            counts[k] += c[k]
        if config.record:
            tapes.extend(_tapes_from_log(log, n, config, params, done))
        done += n
        chunk += 1
    term = {k: np.concatenate(v) for k, v in out.items()}
    term["p"] = mid_price(config.p0, params.delta, term["ticks"])
    return term, counts, tapes


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    if v.size < 2:
        return float(v.mean()), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def run_backtest(config, params):
    """Monte-Carlo estimate of the terminal utility ``X_T + Y_T P_T - eta Y_T^2``."""
    term, counts, tapes = simulate_paths(params, config)
    x, y, p = term["x"], term["y"], term["p"]
    util = x + y * p - params.eta * y.astype(float) ** 2
    term["utility"] = util
    mu, se = _mean_se(util)
    policy = config.policy if config.policy is not None else HoldPolicy()
    q = term["i"] * y
    return BacktestReport(
        policy=getattr(policy, "name", type(policy).__name__),
        n_paths=config.n_paths,
        seed=config.seed,
        eta=params.eta,
        mean_utility=mu,
        se_utility=se,
        mean_y=float(y.mean()),
        var_y=float(y.var(ddof=1)) if y.size > 1 else 0.0,
        mean_q2=float(np.mean(q.astype(float) ** 2)),
        fills=counts,
        params_hash=params.fingerprint(),
        terminal=term,
        tapes=tapes,
    )


# -- oracles -------------------------------------------------------------------


def _reset_process(params, n, s0, rng):
    wait, _ = sample_next_jump((np.ones(n, dtype=int), np.full(n, float(s0))), params, rng, frozen_tail=True)
    return wait


def oracle_elapsed_time_functional(params, integrand, t0, s0, n_paths, rng, horizon=None,
                                   n_steps=None, return_resets=False):
    """Mean and SE of ``int_{t0}^T integrand(u, S_u) du`` with ``S_{t0} = s0``.

    ``S`` ages at unit speed and resets to 0 at rate ``sigma2(S)`` (the
    frozen-tail renewal process).  ``integrand`` is a callable on arrays or a
    :class:`~mrpmm.pde.ValueGrid` (bilinear interpolation).  The time integral
    uses the midpoint rule on ``n_steps`` equal steps, each split at the
    resets that fall inside it.
    """
    T = params.horizon if horizon is None else float(horizon)
    f = integrand.interp if hasattr(integrand, "interp") else integrand
    if n_steps is None:
        n_steps = max(200, int(np.ceil((T - t0) / 0.005)))
    h = (T - t0) / n_steps
    n = int(n_paths)
    last = np.full(n, t0 - s0)
    nxt = t0 + _reset_process(params, n, s0, rng)
    acc = np.zeros(n)
    resets = np.zeros(n, dtype=np.int64)
    for step in range(n_steps):
        a = t0 + step * h
        b = a + h
        lo = np.full(n, a)
        act = np.arange(n)
        while act.size:
            # segment [lo, min(next reset, b)] at the current age
            hi = np.minimum(nxt[act], b)
            mid = 0.5 * (lo[act] + hi)
            acc[act] += (hi - lo[act]) * f(mid, mid - last[act])
            act = act[nxt[act] < b]
            lo[act] = nxt[act]
            last[act] = nxt[act]
            resets[act] += 1
            nxt[act] = last[act] + _reset_process(params, act.size, 0.0, rng)
    mean, se = _mean_se(acc)
    if return_resets:
        return mean, se, resets
    return mean, se


def oracle_terminal_price(params, t0, s0, n_paths, rng, horizon=None, i0=1):
    """Mean and SE of ``i0 (P_T - P_t0)`` in ticks times ``2 delta``: the theta oracle."""
    T = params.horizon if horizon is None else float(horizon)
    n = int(n_paths)
    wait, b = sample_next_jump((np.ones(n, dtype=int), np.full(n, float(s0))), params, rng, frozen_tail=True)
    nxt = t0 + wait
    rel = b.astype(np.int64)  # direction of the pending jump relative to i0
    ticks = np.zeros(n, dtype=np.int64)
    live = np.flatnonzero(nxt <= T)
    while live.size:
        ticks[live] += rel[live]
        w, bb = sample_next_jump((np.ones(live.size, dtype=int), np.zeros(live.size)), params, rng, frozen_tail=True)
        nxt[live] += w
        rel[live] = rel[live] * bb
        live = live[nxt[live] <= T]
    return _mean_se(2.0 * params.delta * ticks)


def oracle_inventory_moments(params, policy, t0, s0, n_paths, rng, horizon=None):
    """Inventory moments from ``Y = 0`` after an up-jump under a feedback policy.

    Returns ``(E[Y_T], E[Q_T^2], se_y, se_q2)``.  With the eta = 0 policy these
    estimate ``zeta_1(t0, s0)`` and ``zeta_0(t0, s0)``.
    """
    seed = int(rng.integers(0, 2**63))
    cfg = BacktestConfig(n_paths=int(n_paths), seed=seed, policy=policy, i0=1, s0=s0, t0=t0,
                         horizon=params.horizon if horizon is None else horizon)
    term, _, _ = simulate_paths(params, cfg)
    y = term["y"].astype(float)
    q2 = (term["i"] * term["y"]).astype(float) ** 2
    my, sy = _mean_se(y)
    mq, sq = _mean_se(q2)
    return my, mq, sy, sq


def utility_curve(params, policies, eta_list, config):
    """Backtest every policy at every eta with common random numbers.

    ``policies`` maps a name to either a policy or a callable ``eta -> policy``.
    Returns rows ``{"eta", "policy", "mean", "se", "mean_y", "var_y"}``.
    """
    rows = []
    for eta in eta_list:
        pe = params.replace(eta=float(eta))
        for name, pol in policies.items():
            policy = pol if isinstance(pol, Policy) else pol(float(eta))
            cfg = replace(config, policy=policy, record=False)
            rep = run_backtest(cfg, pe)
            rows.append({"eta": float(eta), "policy": name, "mean": rep.mean_utility,
                         "se": rep.se_utility, "mean_y": rep.mean_y, "var_y": rep.var_y})
    return rows
