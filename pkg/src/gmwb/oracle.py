"""Independent reference values.

* :func:`deterministic_value`: closed forms for a riskless fund (``sigma = 0``).
* :func:`tree_value`: backward induction on a binomial market.  Withdrawals
  break recombination of the account, but the account alone is Markov, so the
  value functions are carried on a per-level grid of account values with
  linear interpolation.
* :func:`enumerate_value`: the same binomial model solved on every path
  exactly (no grid), for checking the interpolation on short horizons.

All three use the contract conventions of the simulation engine: withdrawals
valued as a continuous annuity, fees ``x (e^{alpha dt} - 1)`` on the
pre-withdrawal value ``x``, the trigger-step shortfall paid by the rider and
the remaining withdrawals as a continuous annuity after the trigger.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .contract import ContractSpec, MarketParams, annuity
from .surrender import BoundaryPoint

__all__ = [
    "DeterministicSolution",
    "TreeResult",
    "deterministic_value",
    "tree_value",
    "enumerate_value",
    "tree_parameters",
]


@dataclass(frozen=True)
class DeterministicSolution:
    """Riskless-fund solution; ``tau`` is ``inf`` when the account never empties."""

    tau: float
    w_terminal: float
    v0: float
    u0: float
    fee_pv: float
    m: float
    premium: float
    withdrawal: float

    def account(self, t) -> np.ndarray:
        """Account value ``W_t``, absorbed at zero."""
        t = np.asarray(t, dtype=float)
        if self.m == 0.0:
            w = self.premium - self.withdrawal * t
        else:
            b = self.withdrawal / self.m
            w = (self.premium - b) * np.exp(self.m * t) + b
        return np.where(t < self.tau, np.maximum(w, 0.0), 0.0)


def deterministic_value(spec: ContractSpec, market: MarketParams) -> DeterministicSolution:
    """Closed-form ``tau``, ``W_T``, ``V0`` and ``U0`` when ``sigma = 0``.

    With ``m = r - alpha`` the account solves ``dW = (m W - G) dt``, so
    ``W_t = (P - G/m) e^{mt} + G/m`` (``P - G t`` if ``m = 0``).
    """
    if market.sigma != 0.0:
        raise ValueError("closed form needs sigma = 0")
    r, a = market.r, spec.fee_rate
    if not r > 0:
        raise ValueError("riskless rate must be positive")
    P, G, T = spec.premium, spec.annual_withdrawal, spec.maturity
    m = r - a
    if m == 0.0:
        tau = P / G
    elif G - m * P > 0.0:
        tau = math.log(G / (G - m * P)) / m
    else:
        tau = math.inf
    tau_bar = min(tau, T)

    sol = DeterministicSolution(tau, 0.0, 0.0, 0.0, 0.0, m, P, G)
    w_T = float(sol.account(T)) if tau > T else 0.0

    # fee income: int_0^tau_bar alpha W_s e^{-rs} ds
    if a == 0.0:
        fees = 0.0
    elif m == 0.0:
        h = tau_bar
        fees = a * (P * annuity(r, h) - G * (annuity(r, h) - h * math.exp(-r * h)) / r)
    else:
        b = G / m
        # (P - b) e^{(m - r) s} = (P - b) e^{-alpha s}
        fees = a * ((P - b) * (-math.expm1(-a * tau_bar)) / a + b * annuity(r, tau_bar))
    rider = math.exp(-r * tau_bar) * G * annuity(r, T - tau_bar) if tau <= T else 0.0
    v0 = G * annuity(r, T) + math.exp(-r * T) * w_T
    return DeterministicSolution(tau, w_T, v0, rider - fees, fees, m, P, G)


def tree_parameters(market: MarketParams, steps_per_year: int) -> tuple[float, float, float]:
    """Up factor, down factor and risk-neutral up probability."""
    dt = 1.0 / steps_per_year
    up = math.exp(market.sigma * math.sqrt(dt))
    down = 1.0 / up
    if up == down:
        raise ValueError("binomial tree needs sigma > 0")
    q = (math.exp(market.r * dt) - down) / (up - down)
    if not 0.0 < q < 1.0:
        raise ValueError(f"risk-neutral probability {q:.6f} outside (0, 1): use more steps per year")
    return up, down, q


@dataclass(frozen=True)
class TreeResult:
    """Binomial values.  ``l0 = u0 - u0_nl`` and ``l0_from_v = v0 - v0_nl``."""

    v0: float
    u0: float
    l0: float
    l0_from_v: float
    v0_nl: float
    u0_nl: float
    boundary: tuple[BoundaryPoint, ...]
    steps_per_year: int
    w_points: int

    def to_dict(self) -> dict:
        return {
            "v0": self.v0,
            "u0": self.u0,
            "l0": self.l0,
            "l0_from_v": self.l0_from_v,
            "v0_nl": self.v0_nl,
            "u0_nl": self.u0_nl,
            "boundary": [{"t": b.t, "critical_w": b.critical_w} for b in self.boundary],
            "steps_per_year": self.steps_per_year,
            "w_points": self.w_points,
        }


def _grid_top(P: float, up: float, k: int, t: float, drift: float, sigma: float) -> float:
    """Grid ceiling: the highest reachable account, capped at 7 standard deviations."""
    return P * min(up**k, math.exp(abs(drift) * t + 7.0 * sigma * math.sqrt(t)))


def _interp(x, xp, fp):
    """Linear interpolation, extrapolating linearly past the last node."""
    y = np.interp(x, xp, fp)
    over = x > xp[-1]
    if np.any(over):
        slope = (fp[-1] - fp[-2]) / (xp[-1] - xp[-2])
        y = np.where(over, fp[-1] + slope * (x - xp[-1]), y)
    return y


def _step(w, gu, gd, q, gdt, fee_mult, r, dt, G, tail_next, look):
    """One backward step for account values ``w``; ``look(w')`` returns (v, u) at the next level."""
    disc = math.exp(-r * dt)
    v = np.zeros_like(w)
    u = np.zeros_like(w)
    for prob, g in ((q, gu), (1.0 - q, gd)):
        x = w * g
        alive = x > gdt
        nv, nu = look(np.where(alive, x - gdt, 0.0))
        nv = np.where(alive, nv, G * tail_next)
        nu = np.where(alive, nu, G * tail_next)
        short = np.where(alive, 0.0, gdt - x)
        v += prob * nv
        u += prob * (short - x * fee_mult + nu)
    return G * annuity(r, dt) + disc * v, disc * u


def tree_value(
    spec: ContractSpec,
    market: MarketParams,
    steps_per_year: int,
    with_lapse: bool = True,
    w_points: int = 401,
    exercise_every: int = 1,
) -> TreeResult:
    """Dynamic-programming values on a binomial market.

    Parameters
    ----------
    with_lapse : bool
        Allow surrender at grid dates ``0, every, 2 every, ...`` before
        maturity; otherwise the lapse values equal the no-lapse ones.
    w_points : int
        Account-value grid size per level.  Each level spans ``[0, P u^k]``,
        capped at seven standard deviations of the fund so long trees keep
        their resolution; values beyond the cap are extrapolated linearly.
    """
    up, down, q = tree_parameters(market, steps_per_year)
    T = spec.maturity
    n = round(steps_per_year * T)
    dt = 1.0 / steps_per_year
    r, a = market.r, spec.fee_rate
    P, G = spec.premium, spec.annual_withdrawal
    gdt = G * dt
    gu, gd = up * math.exp(-a * dt), down * math.exp(-a * dt)
    fee_mult = math.expm1(a * dt)
    ex_steps = set(range(0, n, exercise_every)) if with_lapse else set()

    grid_next = np.linspace(0.0, _grid_top(P, up, n, T, r - a, market.sigma), w_points)
    v_l, u_l = grid_next.copy(), np.zeros(w_points)
    v_n, u_n = v_l.copy(), u_l.copy()
    boundary = []
    for k in range(n - 1, -1, -1):
        grid = np.linspace(0.0, _grid_top(P, up, k, k * dt, r - a, market.sigma), w_points)
        tail_next = annuity(r, T - (k + 1) * dt)
        gn, vl1, ul1, vn1, un1 = grid_next, v_l, u_l, v_n, u_n

        v_n, u_n = _step(grid, gu, gd, q, gdt, fee_mult, r, dt, G, tail_next,
                         lambda x: (_interp(x, gn, vn1), _interp(x, gn, un1)))
        v_l, u_l = _step(grid, gu, gd, q, gdt, fee_mult, r, dt, G, tail_next,
                         lambda x: (_interp(x, gn, vl1), _interp(x, gn, ul1)))
        tail = G * annuity(r, T - k * dt)
        for v, u in ((v_n, u_n), (v_l, u_l)):
            v[0] = tail
            u[0] = tail
        if k in ex_steps:
            charge = spec.cdsc.charge(k * dt)
            proceeds = grid * (1.0 - charge)
            ex = (grid > 0.0) & (proceeds > 0.0) & (proceeds > v_l)
            v_l = np.where(ex, proceeds, v_l)
            u_l = np.where(ex, -grid * charge, u_l)
            hits = np.flatnonzero(ex)
            boundary.append(BoundaryPoint(k * dt, float(grid[hits[0]]) if hits.size else None))
        np.maximum.accumulate(v_n, out=v_n)
        np.maximum.accumulate(v_l, out=v_l)
        grid_next = grid

    boundary.reverse()
    v0, u0, v0n, u0n = float(v_l[-1]), float(u_l[-1]), float(v_n[-1]), float(u_n[-1])
    return TreeResult(v0, u0, u0 - u0n, v0 - v0n, v0n, u0n, tuple(boundary), steps_per_year, w_points)


def enumerate_value(
    spec: ContractSpec,
    market: MarketParams,
    steps_per_year: int,
    with_lapse: bool = True,
    exercise_every: int = 1,
) -> tuple[float, float, float, float]:
    """Exact binomial ``(v0, u0, v0_nl, u0_nl)`` over all ``2^N`` paths (``N <= 22``)."""
    up, down, q = tree_parameters(market, steps_per_year)
    T = spec.maturity
    n = round(steps_per_year * T)
    if n > 22:
        raise ValueError("path enumeration is limited to 22 steps")
    dt = 1.0 / steps_per_year
    r, a = market.r, spec.fee_rate
    G = spec.annual_withdrawal
    gdt = G * dt
    gu, gd = up * math.exp(-a * dt), down * math.exp(-a * dt)
    fee_mult = math.expm1(a * dt)

    # forward: node j at level k has children 2j (up) and 2j + 1 (down)
    levels = [np.array([spec.premium])]
    for _ in range(n):
        w = levels[-1]
        x = np.empty(2 * w.size)
        x[0::2] = w * gu
        x[1::2] = w * gd
        levels.append(np.where(x > gdt, x - gdt, 0.0))

    disc = math.exp(-r * dt)
    ann = G * annuity(r, dt)
    v_l = levels[n].copy()
    u_l = np.zeros_like(v_l)
    v_n, u_n = v_l.copy(), u_l.copy()
    for k in range(n - 1, -1, -1):
        w = levels[k]
        tail_next = G * annuity(r, T - (k + 1) * dt)
        x = np.empty(2 * w.size)
        x[0::2] = w * gu
        x[1::2] = w * gd
        alive = x > gdt
        short = np.where(alive, 0.0, gdt - x)
        probs = np.tile([q, 1.0 - q], w.size)
        out = []
        for v1, u1 in ((v_n, u_n), (v_l, u_l)):
            v1 = np.where(alive, v1, tail_next)
            u1 = np.where(alive, u1, tail_next)
            v = ann + disc * (probs * v1).reshape(-1, 2).sum(axis=1)
            u = disc * (probs * (short - x * fee_mult + u1)).reshape(-1, 2).sum(axis=1)
            dead = w == 0.0
            tail = G * annuity(r, T - k * dt)
            out.append((np.where(dead, tail, v), np.where(dead, tail, u)))
        (v_n, u_n), (v_l, u_l) = out
        if with_lapse and k % exercise_every == 0:
            charge = spec.cdsc.charge(k * dt)
            proceeds = w * (1.0 - charge)
            ex = (w > 0.0) & (proceeds > 0.0) & (proceeds > v_l)
            v_l = np.where(ex, proceeds, v_l)
            u_l = np.where(ex, -w * charge, u_l)
    return float(v_l[0]), float(u_l[0]), float(v_n[0]), float(u_n[0])
