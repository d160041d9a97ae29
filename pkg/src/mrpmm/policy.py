"""Quoting decisions built from solved fields.

A decision is a pair of binary flags ``(ell_plus, ell_minus)``: post one lot
of size L on the strong side (concordant with the last jump) and/or on the
weak side.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import PolicyUndefined, QRangeExceeded, ValidationError
from .pde import Coefficients, ValueGrid


@dataclass(frozen=True)
class QuoteDecision:
    ell_plus: int
    ell_minus: int

    def __post_init__(self):
        if self.ell_plus not in (0, 1) or self.ell_minus not in (0, 1):
            raise ValidationError("quote flags are binary")

    def as_tuple(self):
        return (self.ell_plus, self.ell_minus)


@dataclass
class AdjustmentField:
    """Inventory-independent (A) and inventory-linear (B) barrier shifts per side."""

    A_plus: ValueGrid
    A_minus: ValueGrid
    B_plus: ValueGrid
    B_minus: ValueGrid

    def A(self, side):
        return self.A_plus if side == 1 else self.A_minus

    def B(self, side):
        return self.B_plus if side == 1 else self.B_minus


def _decision(lp, lm):
    return QuoteDecision(int(bool(lp)), int(bool(lm)))


def control_eta0(G_grids, t, s):
    gp, gm = G_grids
    return _decision(gp.at(t, s) > 0, gm.at(t, s) > 0)


def adjustments(params, zeta1):
    grid = zeta1.grid
    c = Coefficients.on(params, grid)
    L = params.lot_size
    z = zeta1.values
    z0 = z[:, :1]
    out = {}
    for side, name, fd in ((1, "plus", params.fill_plus), (-1, "minus", params.fill_minus)):
        h, lam = c.h(side), c.lam(side)
        A = h * L * (L - 2.0 * z0) + lam * (fd.m2 - side * 2.0 * z * fd.m1)
        B = np.broadcast_to(h * L + lam * fd.m1, z.shape).copy()
        out[f"A_{name}"] = ValueGrid(f"A_{name}", A, grid)
        out[f"B_{name}"] = ValueGrid(f"B_{name}", B, grid)
    return AdjustmentField(**out)


def approx_threshold(adj, eta, side, n, j, q):
    """``eta * (A - 2 side B q)`` at lattice indices."""
    return eta * (adj.A(side).values[n, j] - 2.0 * side * adj.B(side).values[n, j] * q)


def control_approx(G_grids, adj, eta, t, s, q):
    g = G_grids[0].grid
    n, j = g.t_index(t), g.s_index(s)
    lp = G_grids[0].values[n, j] > approx_threshold(adj, eta, 1, n, j, q)
    lm = G_grids[1].values[n, j] > approx_threshold(adj, eta, -1, n, j, q)
    return _decision(lp, lm)


def exact_threshold(zeta, params, side, n, j, q, extend=False):
    """``<C_side, zeta>`` at lattice indices ``(n, j)`` and strong inventory ``q``.

    Without ``extend`` every lookup must stay inside the solved q-range;
    with it, lookups past the edge use the solver's quadratic closure.
    """
    L = params.lot_size
    qmax = zeta.q_max
    q = np.asarray(q)
    n = np.asarray(n)
    j = np.asarray(j)
    if np.any(np.abs(q) > qmax) or (not extend and np.any(np.abs(q) + L > qmax)):
        raise QRangeExceeded(f"lookups for |q| = {np.max(np.abs(q))} leave [-{qmax}, {qmax}]")
    c = Coefficients.on(params, zeta.grid)
    h = c.h(side)[j]
    lam = c.lam(side)[j]
    pmf = (params.fill_plus if side == 1 else params.fill_minus).pmf
    off = qmax + L

    ext = zeta.extended(L)

    def look(nn, qq, jj):
        return ext[nn, qq + off, jj]

    jump = look(n, side * q - L, 0 * j) - look(n, side * q, 0 * j)
    base = look(n, q, j)
    trade = 0.0
    for k, pk in enumerate(pmf):
        if pk:
            trade = trade + pk * (look(n, q - side * k, j) - base)
    return h * jump + lam * trade


def control_exact(zeta, G_grids, params, t, s, q):
    g = G_grids[0].grid
    n, j = g.t_index(t), g.s_index(s)
    lp = G_grids[0].values[n, j] > exact_threshold(zeta, params, 1, n, j, q)
    lm = G_grids[1].values[n, j] > exact_threshold(zeta, params, -1, n, j, q)
    return _decision(lp, lm)


# -- vectorised policies for the backtester -----------------------------------


class Policy:
    """Feedback rule ``(t, s, q) -> (ell_plus, ell_minus)`` on arrays."""

    name = "policy"
    depends_on_q = False

    def __call__(self, t, s, q):
        raise NotImplementedError


class HoldPolicy(Policy):
    name = "hold"

    def __call__(self, t, s, q):
        z = np.zeros(np.shape(t), dtype=bool)
        return z, z.copy()


class AlwaysOnPolicy(Policy):
    name = "always_on"

    def __call__(self, t, s, q):
        o = np.ones(np.shape(t), dtype=bool)
        return o, o.copy()


class Eta0Policy(Policy):
    name = "eta0"

    def __init__(self, G_grids):
        self.gp, self.gm = G_grids
        self.grid = self.gp.grid

    def __call__(self, t, s, q):
        n, j = self.grid.t_index(t), self.grid.s_index(s)
        return self.gp.values[n, j] > 0, self.gm.values[n, j] > 0


class ApproxPolicy(Policy):
    name = "approx"
    depends_on_q = True

    def __init__(self, G_grids, adj, eta):
        self.gp, self.gm = G_grids
        self.adj = adj
        self.eta = eta
        self.grid = self.gp.grid

    def __call__(self, t, s, q):
        n, j = self.grid.t_index(t), self.grid.s_index(s)
        lp = self.gp.values[n, j] > approx_threshold(self.adj, self.eta, 1, n, j, q)
        lm = self.gm.values[n, j] > approx_threshold(self.adj, self.eta, -1, n, j, q)
        return lp, lm


class ExactPolicy(Policy):
    name = "exact"
    depends_on_q = True

    def __init__(self, zeta, G_grids, params):
        self.zeta = zeta
        self.gp, self.gm = G_grids
        self.params = params
        self.grid = self.gp.grid

    def __call__(self, t, s, q):
        q = np.asarray(q)
        if np.any(np.abs(q) > self.zeta.q_max):
            raise PolicyUndefined(f"strong inventory {np.max(np.abs(q))} beyond q_max")
        n, j = self.grid.t_index(t), self.grid.s_index(s)
        thr_p = exact_threshold(self.zeta, self.params, 1, n, j, q, extend=True)
        thr_m = exact_threshold(self.zeta, self.params, -1, n, j, q, extend=True)
        return self.gp.values[n, j] > thr_p, self.gm.values[n, j] > thr_m


def decision_table(policy, grid, q_values=(None,)):
    """All lattice decisions as rows ``(t, s, q, ell_plus, ell_minus)``."""
    tt, ss = np.meshgrid(grid.t_nodes, grid.s_nodes, indexing="ij")
    rows = []
    for q in q_values:
        qq = np.zeros(tt.shape, dtype=int) if q is None else np.full(tt.shape, int(q))
        lp, lm = policy(tt.ravel(), ss.ravel(), qq.ravel())
        rows.append((tt.ravel(), ss.ravel(), None if q is None else qq.ravel(), lp, lm))
    return rows


def export_policy_csv(policy, grid, path, q_values=None):
    """Write ``t, s, [q,] ell_plus, ell_minus`` for every lattice node."""
    with_q = q_values is not None
    blocks = decision_table(policy, grid, q_values if with_q else (None,))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "s", "q", "ell_plus", "ell_minus"] if with_q else ["t", "s", "ell_plus", "ell_minus"])
        for t, s, q, lp, lm in blocks:
            cols = [t, s] + ([q] if with_q else []) + [lp.astype(int), lm.astype(int)]
            for row in zip(*cols):
                w.writerow([repr(float(row[0])), repr(float(row[1]))] + [int(v) for v in row[2:]])


def operator_identity_residual(params, zeta1, zeta0, eta, q_values):
    """Largest gap between ``<C_side, eta (q^2 + 2 q zeta1 + zeta0)>`` and ``eta (A -/+ 2 q B)``.

    The quadratic ansatz is laid out on a q-range wide enough that every
    lookup from ``q_values`` stays inside it, so no closure is involved.
    """
    from .pde import ZetaField

    L = params.lot_size
    q_values = np.asarray(q_values)
    qmax = int(np.max(np.abs(q_values))) + L
    qs = np.arange(-qmax, qmax + 1)
    vals = eta * (qs[None, :, None] ** 2 + 2 * qs[None, :, None] * zeta1.values[:, None, :]
                  + zeta0.values[:, None, :])
    ans = ZetaField(vals, zeta1.grid, qmax, eta)
    adj = adjustments(params, zeta1)
    g = zeta1.grid
    nn, jj = np.meshgrid(np.arange(g.nt + 1), np.arange(g.ns + 1), indexing="ij")
    worst = 0.0
    for q in q_values:
        for side in (1, -1):
            lhs = exact_threshold(ans, params, side, nn, jj, int(q))
            rhs = approx_threshold(adj, eta, side, nn, jj, int(q))
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst
