"""Event tapes: merged, time-sorted price jumps and trades with agent fills.

CSV columns are ``time, kind, direction, fill, state_s, price``:

* ``JUMP`` rows carry the jump direction ``J_n``, the agent's jump fill (0 or
  L), the elapsed time just before the jump and the post-jump mid-price.
* ``TRADE`` rows carry the trade sign ``Z_k`` (+1 at the ask), the agent's
  executed quantity, the elapsed time and the prevailing mid-price.

A JSON sidecar next to the CSV holds the initial state and run metadata.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .model import mid_price, simulate_jumps
from .order_flow import simulate_trade_arrays

COLUMNS = ("time", "kind", "direction", "fill", "state_s", "price")
JUMP, TRADE = "JUMP", "TRADE"


@dataclass
class EventTape:
    time: np.ndarray
    is_jump: np.ndarray
    direction: np.ndarray
    fill: np.ndarray
    state_s: np.ndarray
    price: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.is_jump = np.asarray(self.is_jump, dtype=bool)
        self.direction = np.asarray(self.direction, dtype=np.int64)
        self.fill = np.asarray(self.fill, dtype=np.int64)
        self.state_s = np.asarray(self.state_s, dtype=float)
        self.price = np.asarray(self.price, dtype=float)
        n = self.time.size
        for name in COLUMNS[1:]:
            arr = self.is_jump if name == "kind" else getattr(self, name)
            if arr.shape != (n,):
                raise ValidationError(f"column {name} has the wrong length")

    def __len__(self):
        return int(self.time.size)

    @property
    def kinds(self):
        return np.where(self.is_jump, JUMP, TRADE)

    def jumps(self):
        return self.time[self.is_jump], self.direction[self.is_jump]

    def trades(self):
        m = ~self.is_jump
        return self.time[m], self.direction[m]

    def validate(self):
        """Check time order, jump signs and the tick grid."""
        if np.any(np.diff(self.time) <= 0):
            raise ValidationError("tape times must be strictly increasing")
        if np.any(np.abs(self.direction) != 1):
            raise ValidationError("directions must be +1 or -1")
        if np.any(self.fill < 0):
            raise ValidationError("fills must be nonnegative")
        if "p0" in self.meta and "delta" in self.meta and len(self):
            ticks = (self.price - self.meta["p0"]) / (2.0 * self.meta["delta"])
            if np.max(np.abs(ticks - np.rint(ticks))) > 1e-6:
                raise ValidationError("prices are off the tick grid")
        return self

    def to_csv(self, path):
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for row in zip(self.time, self.kinds, self.direction, self.fill, self.state_s, self.price):
                w.writerow([repr(float(row[0])), row[1], int(row[2]), int(row[3]),
                            repr(float(row[4])), repr(float(row[5]))])
        path.with_suffix(".json").write_text(json.dumps(self.meta, indent=2, sort_keys=True))

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        side = path.with_suffix(".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            head = next(reader, None)
            if head is None or tuple(head) != COLUMNS:
                raise ValidationError(f"{path}: expected header {','.join(COLUMNS)}")
            rows = list(reader)
        if any(r[1] not in (JUMP, TRADE) for r in rows):
            raise ValidationError(f"{path}: kind must be JUMP or TRADE")
        cols = list(zip(*rows)) if rows else [()] * 6
        return cls(
            time=np.array(cols[0], dtype=float),
            is_jump=np.array([k == JUMP for k in cols[1]], dtype=bool),
            direction=np.array(cols[2], dtype=np.int64),
            fill=np.array(cols[3], dtype=np.int64),
            state_s=np.array(cols[4], dtype=float),
            price=np.array(cols[5], dtype=float),
            meta=meta,
        )


def market_tape(params, horizon, rng, i0=1, s0=0.0, p0=0.0, agent_on=False):
    """Exogenous market on ``[0, horizon]`` as a tape.

    With ``agent_on`` the agent quotes one lot on both sides at all times
    (the zero-intelligence strategy), so every trade fills ``k ~ fill_pm``
    on its side and every jump fills the full lot.
    """
    path = simulate_jumps(params, horizon, rng, i0=i0, s0=s0, p0=p0)
    tt, z, gam = simulate_trade_arrays(path, params, rng)
    L = params.lot_size
    nj = path.jump_times.size
    if agent_on:
        kp = rng.choice(L + 1, size=tt.size, p=params.fill_plus.pmf)
        km = rng.choice(L + 1, size=tt.size, p=params.fill_minus.pmf)
        trade_fill = np.where(gam == 1, kp, km)
        jump_fill = np.full(nj, L)
    else:
        trade_fill = np.zeros(tt.size, dtype=int)
        jump_fill = np.zeros(nj, dtype=int)
    anchors = np.concatenate([[-s0], path.jump_times])
    jump_s = np.diff(anchors)
    k = np.searchsorted(path.jump_times, tt, side="left")
    trade_s = tt - anchors[k]
    ticks_after = np.cumsum(path.directions)
    ticks_trade = np.concatenate([[0], ticks_after])[k]
    time = np.concatenate([path.jump_times, tt])
    order = np.argsort(time, kind="stable")
    meta = {
        "i0": int(i0), "s0": float(s0), "p0": float(p0), "t0": 0.0, "horizon": float(horizon),
        "delta": params.delta, "fee": params.fee, "lot_size": L, "x0": 0.0, "y0": 0,
        "agent_on": bool(agent_on), "params_hash": params.fingerprint(),
    }
    return EventTape(
        time=time[order],
        is_jump=np.concatenate([np.ones(nj, bool), np.zeros(tt.size, bool)])[order],
        direction=np.concatenate([path.directions, z])[order],
        fill=np.concatenate([jump_fill, trade_fill])[order],
        state_s=np.concatenate([jump_s, trade_s])[order],
        price=mid_price(p0, params.delta, np.concatenate([ticks_after, ticks_trade]))[order],
        meta=meta,
    )


def replay(tape):
    """Re-run the cash/inventory bookkeeping over a recorded tape.

    Uses the same arithmetic as the backtester, so ``(X_T, Y_T)`` agree bit
    for bit with the engine's terminal state.
    """
    m = tape.meta
    try:
        p0, delta, fee = float(m["p0"]), float(m["delta"]), float(m["fee"])
        x, y = float(m.get("x0", 0.0)), int(m.get("y0", 0))
    except KeyError as exc:
        raise ValidationError(f"tape metadata lacks {exc.args[0]!r}") from None
    ticks = 0
    for jump, d, k in zip(tape.is_jump.tolist(), tape.direction.tolist(), tape.fill.tolist()):
        if k > 0:
            price = mid_price(p0, delta, ticks)
            x = x + k * (d * price + delta - fee)
            y = y - d * k
        if jump:
            ticks += d
    return x, y
