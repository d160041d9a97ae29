"""Backward solvers for the (t, s) integro-PDEs of the market-making model.

All equations share the transport operator ``d/dt + d/ds``.  On a lattice
with equal steps in t and s the characteristic through ``(t, s)`` passes
through ``(t + dt, s + dt)``, so each backward step reads the continuation
value one node up the diagonal and adds ``dt`` times the reaction, the
nonlocal ``s -> 0`` reset terms and the source.  Coefficients are taken at
``s``, values at ``t + dt``; this is the Markov chain that jumps to
``s = 0`` with probability ``dt * sigma2(s)`` and otherwise ages by ``dt``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import OutOfGrid, QRangeExceeded, QRangeTooSmall, StabilityViolation, ValidationError

STABILITY_BOUND = 0.5
FIELDS = ("theta", "omega", "zeta1", "zeta0", "G_plus", "G_minus", "G_trd_plus",
          "G_trd_minus", "G_jmp_plus", "G_jmp_minus", "A_plus", "A_minus", "B_plus", "B_minus")


@dataclass(frozen=True)
class GridSpec:
    dt: float
    horizon: float
    s_max: float
    nt: int
    ns: int

    @classmethod
    def build(cls, params, dt, horizon=None):
        T = params.horizon if horizon is None else horizon
        nt = int(round(T / dt))
        if nt < 1 or abs(nt * dt - T) > 1e-9 * max(T, 1.0):
            raise ValidationError(f"dt = {dt} does not divide the horizon {T}")
        ns = int(math.ceil(params.s_max / dt - 1e-9))
        grid = cls(float(dt), float(T), float(params.s_max), nt, ns)
        grid.check_stability(params)
        return grid

    def check_stability(self, params):
        load = self.dt * (params.sigma2_max + params.lambda_max)
        if load > STABILITY_BOUND:
            raise StabilityViolation(
                f"dt * (sigma2_max + lambda_max) = {load:.3f} exceeds {STABILITY_BOUND}"
            )

    @property
    def t_nodes(self):
        return np.arange(self.nt + 1) * self.dt

    @property
    def s_nodes(self):
        return np.arange(self.ns + 1) * self.dt

    def t_index(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t > self.horizon + 1e-9) or np.any(t < -1e-9):
            raise OutOfGrid(f"t outside [0, {self.horizon}]")
        return np.clip(np.rint(t / self.dt).astype(int), 0, self.nt)

    def s_index(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < -1e-9):
            raise OutOfGrid("negative elapsed time")
        return np.clip(np.rint(s / self.dt).astype(int), 0, self.ns)

    def to_dict(self):
        return asdict(self)


@dataclass
class ValueGrid:
    """One scalar field on the (t, s) lattice, ``values[n, j]`` at ``(n dt, j dt)``."""

    field: str
    values: np.ndarray
    grid: GridSpec
    meta: dict = field(default_factory=dict)

    def at(self, t, s):
        """Nearest-node lookup."""
        return self.values[self.grid.t_index(t), self.grid.s_index(s)]

    def interp(self, t, s):
        """Bilinear interpolation, held flat past the last s node."""
        g = self.grid
        x = np.clip(np.asarray(t, dtype=float) / g.dt, 0.0, g.nt)
        y = np.clip(np.asarray(s, dtype=float) / g.dt, 0.0, g.ns)
        n0 = np.minimum(np.floor(x).astype(int), g.nt - 1)
        j0 = np.minimum(np.floor(y).astype(int), g.ns - 1)
        a = x - n0
        b = y - j0
        v = self.values
        return ((1 - a) * ((1 - b) * v[n0, j0] + b * v[n0, j0 + 1])
                + a * ((1 - b) * v[n0 + 1, j0] + b * v[n0 + 1, j0 + 1]))

    def header(self):
        return {"field": self.field, "grid": self.grid.to_dict(), "meta": self.meta}

    def to_csv(self, path):
        path = Path(path)
        g = self.grid
        tt, ss = np.meshgrid(g.t_nodes, g.s_nodes, indexing="ij")
        table = np.column_stack([tt.ravel(), ss.ravel(), self.values.ravel()])
        np.savetxt(path, table, fmt="%.17g", delimiter=",", header="t,s,value", comments="")
        path.with_suffix(".json").write_text(json.dumps(self.header(), indent=2, sort_keys=True))

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        head = json.loads(path.with_suffix(".json").read_text())
        grid = GridSpec(**head["grid"])
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        shape = (grid.nt + 1, grid.ns + 1)
        if table.shape != (shape[0] * shape[1], 3):
            raise ValidationError(f"{path} does not match its grid header")
        return cls(head["field"], table[:, 2].reshape(shape), grid, head.get("meta", {}))


@dataclass
class ZetaField:
    """Risk-aversion deformation ``zeta(t, s, q)``; ``values[n, q + q_max, j]``."""

    values: np.ndarray
    grid: GridSpec
    q_max: int
    eta: float
    meta: dict = field(default_factory=dict)

    @property
    def q_nodes(self):
        return np.arange(-self.q_max, self.q_max + 1)

    def extended(self, pad):
        """Values with the q-axis padded by ``pad`` using the quadratic closure (cached)."""
        cache = self.__dict__.setdefault("_ext_cache", {})
        if pad not in cache:
            cache.clear()
            cache[pad] = _extend_q(self.values, self.q_max, pad, self.eta)
        return cache[pad]

    def q_index(self, q):
        q = np.asarray(q)
        if np.any(np.abs(q) > self.q_max):
            raise QRangeExceeded(f"|q| exceeds q_max = {self.q_max}")
        return q + self.q_max

    def at(self, t, s, q):
        return self.values[self.grid.t_index(t), self.q_index(q), self.grid.s_index(s)]

    def slice_q(self, q):
        return ValueGrid("zeta", self.values[:, self.q_index(q), :], self.grid)

    def header(self):
        return {"field": "zeta", "grid": self.grid.to_dict(), "q_max": self.q_max,
                "eta": self.eta, "meta": self.meta}

    def to_csv(self, path):
        path = Path(path)
        g = self.grid
        tt, qq, ss = np.meshgrid(g.t_nodes, self.q_nodes, g.s_nodes, indexing="ij")
        table = np.column_stack([tt.ravel(), ss.ravel(), qq.ravel(), self.values.ravel()])
        np.savetxt(path, table, fmt="%.17g", delimiter=",", header="t,s,q,value", comments="")
        path.with_suffix(".json").write_text(json.dumps(self.header(), indent=2, sort_keys=True))

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        head = json.loads(path.with_suffix(".json").read_text())
        grid = GridSpec(**head["grid"])
        q_max = int(head["q_max"])
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        shape = (grid.nt + 1, 2 * q_max + 1, grid.ns + 1)
        if table.shape != (int(np.prod(shape)), 4):
            raise ValidationError(f"{path} does not match its grid header")
        return cls(table[:, 3].reshape(shape), grid, q_max, float(head["eta"]), head.get("meta", {}))


# -- coefficients ---------------------------------------------------------


@dataclass(frozen=True)
class Coefficients:
    """Model rates sampled on the s-nodes (frozen beyond ``s_max``)."""

    h_plus: np.ndarray
    h_minus: np.ndarray
    lam_plus: np.ndarray
    lam_minus: np.ndarray

    @classmethod
    def on(cls, params, grid):
        s = grid.s_nodes
        hp, hm = params.hazards(s)
        lam = params.lam(s)
        return cls(hp, hm, 0.5 * (1 + params.rho) * lam, 0.5 * (1 - params.rho) * lam)

    @property
    def mu(self):
        return self.h_plus - self.h_minus

    @property
    def sigma2(self):
        return self.h_plus + self.h_minus

    def h(self, side):
        return self.h_plus if side == 1 else self.h_minus

    def lam(self, side):
        return self.lam_plus if side == 1 else self.lam_minus


def _up_diagonal(row):
    """Continuation values ``V(t + dt, s + dt)``, held at the last node."""
    return np.concatenate([row[..., 1:], row[..., -1:]], axis=-1)


def _march(grid, step):
    """Run ``row_n = step(n, row_{n+1})`` backward from a zero terminal row."""
    out = np.empty((grid.nt + 1, grid.ns + 1))
    out[grid.nt] = 0.0
    for n in range(grid.nt - 1, -1, -1):
        out[n] = step(n, out[n + 1])
    return out


def _same_grid(*grids):
    first = grids[0].grid
    for g in grids[1:]:
        if g.grid != first:
            raise ValidationError("fields live on different grids")
    return first


# -- linear equations -------------------------------------------------------


def solve_theta(params, grid):
    """Martingale deviation ``theta(t, s) = E[P_T | P_t = 0, I_t = +1, S_t = s]``."""
    grid.check_stability(params)
    c = Coefficients.on(params, grid)
    mu, sig2, dt = c.mu, c.sigma2, grid.dt
    src = 2.0 * params.delta * mu * dt

    def step(n, nxt):
        return (1.0 - dt * sig2) * _up_diagonal(nxt) + dt * mu * nxt[0] + src

    return ValueGrid("theta", _march(grid, step), grid)


def barrier_parts(params, theta):
    """Trade and jump parts of the quoting barriers ``G = G_trd - G_jmp``."""
    grid = theta.grid
    c = Coefficients.on(params, grid)
    th = theta.values
    th0 = th[:, :1]
    d, eps, L = params.delta, params.fee, params.lot_size
    parts = {}
    for side, name, fd in ((1, "plus", params.fill_plus), (-1, "minus", params.fill_minus)):
        trd = c.lam(side) * (d - eps - side * th) * fd.m1
        jmp = c.h(side) * (d + eps + th0) * L
        parts[f"G_trd_{name}"] = ValueGrid(f"G_trd_{name}", trd, grid)
        parts[f"G_jmp_{name}"] = ValueGrid(f"G_jmp_{name}", np.broadcast_to(jmp, th.shape).copy(), grid)
        parts[f"G_{name}"] = ValueGrid(f"G_{name}", trd - jmp, grid)
    return parts


def barrier_G(params, theta):
    """Quoting barriers ``(G_plus, G_minus)`` on the theta grid."""
    parts = barrier_parts(params, theta)
    return parts["G_plus"], parts["G_minus"]


def step_barrier(G):
    """Barrier averaged over each characteristic step.

    Row ``n`` holds ``(G(t_n, s) + G(t_n + dt, s + dt)) / 2``: the midpoint
    value of the barrier along the step that starts at ``(t_n, s)``.  All
    G-driven sources and quoting indicators of the backward solvers use it.
    """
    v = G.values if hasattr(G, "values") else np.asarray(G)
    out = v.copy()
    out[:-1] = 0.5 * (v[:-1] + _up_diagonal(v[1:]))
    return out


def solve_omega(params, G_grids, grid=None):
    """Expected market-making gain over holding, for zero risk aversion."""
    gp, gm = G_grids
    grid = grid or _same_grid(gp, gm)
    grid.check_stability(params)
    c = Coefficients.on(params, grid)
    sig2, dt = c.sigma2, grid.dt
    src = dt * (np.maximum(step_barrier(gp), 0.0) + np.maximum(step_barrier(gm), 0.0))

    def step(n, nxt):
        return (1.0 - dt * sig2) * _up_diagonal(nxt) + dt * sig2 * nxt[0] + src[n]

    return ValueGrid("omega", _march(grid, step), grid)


def _active(G_grids):
    return step_barrier(G_grids[0]) > 0, step_barrier(G_grids[1]) > 0


def solve_zeta1(params, G_grids, grid=None):
    """``E[Y_T | Y_t = 0, I_t = +1, S_t = s]`` under the zero-risk-aversion policy."""
    grid = grid or _same_grid(*G_grids)
    grid.check_stability(params)
    c = Coefficients.on(params, grid)
    mu, sig2, dt = c.mu, c.sigma2, grid.dt
    L = params.lot_size
    on_p, on_m = _active(G_grids)
    b_p = c.h_plus * L + c.lam_plus * params.fill_plus.m1
    b_m = c.h_minus * L + c.lam_minus * params.fill_minus.m1
    src = dt * (b_p * on_p - b_m * on_m)

    def step(n, nxt):
        return (1.0 - dt * sig2) * _up_diagonal(nxt) + dt * mu * nxt[0] - src[n]

    return ValueGrid("zeta1", _march(grid, step), grid)


def solve_zeta0(params, G_grids, zeta1, grid=None):
    """``E[Q_T^2 | Q_t = 0, S_t = s]`` under the zero-risk-aversion policy."""
    grid = grid or _same_grid(G_grids[0], G_grids[1], zeta1)
    grid.check_stability(params)
    c = Coefficients.on(params, grid)
    sig2, dt = c.sigma2, grid.dt
    L = params.lot_size
    on_p, on_m = _active(G_grids)
    z1 = zeta1.values
    fp, fm = params.fill_plus, params.fill_minus

    def step(n, nxt):
        z1_next = z1[n + 1]
        z1_cont = _up_diagonal(z1_next)
        jump_part = (c.h_plus * on_p[n] + c.h_minus * on_m[n]) * (L * L - 2 * L * z1_next[0])
        trade_part = (c.lam_plus * (fp.m2 - 2 * fp.m1 * z1_cont) * on_p[n]
                      + c.lam_minus * (fm.m2 + 2 * fm.m1 * z1_cont) * on_m[n])
        return ((1.0 - dt * sig2) * _up_diagonal(nxt) + dt * sig2 * nxt[0]
                + dt * (jump_part + trade_part))

    return ValueGrid("zeta0", _march(grid, step), grid)


# -- nonlinear risk-aversion equation --------------------------------------


def _extend_q(rows, q_max, pad, eta):
    """Pad the q-axis (second to last) by ``pad`` on each side with the quadratic closure."""
    if pad == 0:
        return rows
    k = np.arange(1, pad + 1)
    growth = eta * ((q_max + k) ** 2 - q_max**2)
    lo = rows[..., :1, :] + growth[::-1, None]
    hi = rows[..., -1:, :] + growth[:, None]
    return np.concatenate([lo, rows, hi], axis=-2)


def _zeta_step(params, c, dt, nxt, gp_row, gm_row, q_max, eta):
    """One backward step of the q-coupled HJB for the risk-aversion deformation."""
    L = params.lot_size
    qs = np.arange(-q_max, q_max + 1)
    cont = _up_diagonal(nxt)
    ext = _extend_q(nxt, q_max, L, eta)
    ext_cont = _up_diagonal(ext)
    total = np.zeros_like(nxt)
    for side, g_row, fd in ((1, gp_row, params.fill_plus), (-1, gm_row, params.fill_minus)):
        h = c.h(side)
        lam = c.lam(side)
        pmf = fd.pmf
        gain = np.maximum(g_row, 0.0)
        vals = []
        for ell in (0, 1):
            jump_to = ext[side * qs - L * ell + q_max + L, 0][:, None]
            trade = np.zeros_like(nxt)
            for k, pk in enumerate(pmf):
                if pk == 0.0:
                    continue
                trade += pk * ext_cont[qs - side * k * ell + q_max + L, :]
            trade -= cont
            vals.append(h * (jump_to - cont) + lam * trade + gain - ell * g_row)
        total += np.minimum(vals[0], vals[1])
    return cont + dt * total


def solve_zeta_exact(params, G_grids, grid=None, q_max=None, eta=None):
    """Explicit backward march of the nonlinear ``zeta(t, s, q)`` system."""
    gp, gm = G_grids
    grid = grid or _same_grid(gp, gm)
    eta = params.eta if eta is None else float(eta)
    if eta < 0:
        raise ValidationError("eta must be nonnegative")
    L = params.lot_size
    q_max = int(q_max if q_max is not None else 10 * L)
    if q_max < 2 * L:
        raise ValidationError("q_max must be at least 2 L")
    c = Coefficients.on(params, grid)
    load = grid.dt * (params.sigma2_max + params.lambda_max)
    if load > STABILITY_BOUND:
        raise StabilityViolation(f"dt * (sigma2_max + lambda_max) = {load:.3f} exceeds {STABILITY_BOUND}")
    qs = np.arange(-q_max, q_max + 1)
    out = np.empty((grid.nt + 1, qs.size, grid.ns + 1))
    out[grid.nt] = eta * (qs**2)[:, None]
    gp_step, gm_step = step_barrier(gp), step_barrier(gm)
    for n in range(grid.nt - 1, -1, -1):
        out[n] = _zeta_step(params, c, grid.dt, out[n + 1], gp_step[n], gm_step[n], q_max, eta)
    return ZetaField(out, grid, q_max, eta)


def check_q_range(params, G_grids, zeta, q_check=None, tol=1e-6):
    """Re-solve with twice the q-range; raise if the interior moved by more than ``tol``."""
    L = params.lot_size
    q_check = 2 * L if q_check is None else q_check
    wide = solve_zeta_exact(params, G_grids, zeta.grid, 2 * zeta.q_max, zeta.eta)
    a = zeta.values[:, zeta.q_index(np.arange(-q_check, q_check + 1)), :]
    b = wide.values[:, wide.q_index(np.arange(-q_check, q_check + 1)), :]
    err = float(np.max(np.abs(a - b)))
    if err > tol:
        raise QRangeTooSmall(f"q-boundary moves |q| <= {q_check} values by {err:.3g}")
    return err


# -- bundles and diagnostics -------------------------------------------------


@dataclass
class Solution:
    params: object
    grid: GridSpec
    theta: ValueGrid
    G_plus: ValueGrid
    G_minus: ValueGrid
    omega: ValueGrid
    zeta1: ValueGrid
    zeta0: ValueGrid
    parts: dict = field(default_factory=dict)

    @property
    def G(self):
        return self.G_plus, self.G_minus


def solve_all(params, grid):
    theta = solve_theta(params, grid)
    parts = barrier_parts(params, theta)
    G = (parts["G_plus"], parts["G_minus"])
    omega = solve_omega(params, G, grid)
    zeta1 = solve_zeta1(params, G, grid)
    zeta0 = solve_zeta0(params, G, zeta1, grid)
    return Solution(params, grid, theta, G[0], G[1], omega, zeta1, zeta0, parts)


def richardson(fields, norm="sup"):
    """Observed convergence order from three solutions at dt, dt/2, dt/4.

    Differences are measured over the coarse lattice nodes, in sup-norm or
    (``norm="mean"``) as the mean absolute difference.  Fields driven by a
    quoting indicator can be nonsmooth where the barrier touches zero along a
    characteristic; the mean norm is the meaningful one for those.
    """
    coarse, mid, fine = fields
    if norm not in ("sup", "mean"):
        raise ValidationError(f"unknown norm {norm!r}")
    reduce = np.max if norm == "sup" else np.mean

    def diff(a, b):
        nt = a.grid.nt + 1
        ns = min(a.grid.ns + 1, (b.grid.ns + 2) // 2)
        return float(reduce(np.abs(a.values[:nt, :ns] - b.values[: 2 * nt - 1 : 2, : 2 * ns - 1 : 2])))

    e1 = diff(coarse, mid)
    e2 = diff(mid, fine)
    order = math.log2(e1 / e2) if e1 > 0 and e2 > 0 else float("inf")
    return order, e1, e2
