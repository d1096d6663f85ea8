"""Monte Carlo values of the contract for the policyholder and the insurer.

Policyholder: ``V = G a(T) + e^{-rT} E[W_T]`` with the annuity in closed form.
Insurer (no lapses): ``U = E[e^{-r tau} (shortfall + G a(T - tau)) - fees]``
where ``tau`` is the grid trigger time, ``shortfall`` the part of the
trigger-step withdrawal the account could not fund, and ``fees`` the
discounted fee ledger up to the trigger.  On common random numbers
``V - (W + U)`` is zero in expectation up to the O(dt) gap between the
closed-form annuity and the end-of-step withdrawals.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .account import AccountStats, mean_stderr, simulate
from .contract import ContractSpec, MarketParams, annuity, annuity_array
from .paths import TimeGrid, derive_seed, generate

__all__ = [
    "ValuationReport",
    "ValueSurface",
    "as_grid",
    "policyholder_values",
    "insurer_values",
    "price_policyholder",
    "price_insurer_nolapse",
    "decompose",
    "value_surface",
]


def as_grid(grid: TimeGrid | int, spec: ContractSpec) -> TimeGrid:
    """Accept either a grid or a steps-per-year count for the full contract."""
    if isinstance(grid, TimeGrid):
        return grid
    return TimeGrid(int(grid), spec.maturity)


def policyholder_values(stats: AccountStats, spec: ContractSpec, market: MarketParams) -> np.ndarray:
    """Per-path discounted withdrawals plus terminal account."""
    h = stats.grid.horizon
    return spec.annual_withdrawal * annuity(market.r, h) + math.exp(-market.r * h) * stats.terminal


def guarantee_values(stats: AccountStats, spec: ContractSpec, market: MarketParams) -> np.ndarray:
    """Per-path discounted rider payouts: trigger shortfall plus the remaining annuity."""
    h = stats.grid.horizon
    tau = np.where(stats.triggered, stats.trigger_step * stats.grid.dt, h)
    tau = np.minimum(tau, h)
    payout = stats.shortfall + spec.annual_withdrawal * annuity_array(market.r, h - tau)
    return np.where(stats.triggered, np.exp(-market.r * tau) * payout, 0.0)


def insurer_values(stats: AccountStats, spec: ContractSpec, market: MarketParams) -> np.ndarray:
    return guarantee_values(stats, spec, market) - stats.fees


@dataclass(frozen=True)
class ValuationReport:
    """Policyholder value, insurer value and the decomposition residual.

    ``residual = v0 - (w0 + u0_nl)``; its standard error is that of the
    per-path difference on the shared paths.
    """

    v0: float
    v0_stderr: float
    u0_nl: float
    u0_nl_stderr: float
    w0: float
    residual: float
    residual_stderr: float
    fee_rate: float
    num_paths: int
    steps_per_year: int
    seed: int
    antithetic: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _simulate(spec, market, grid, num_paths, seed, antithetic, threads, w0=None):
    paths = generate(market, spec.fee_rate, grid, num_paths, seed, antithetic)
    return simulate(spec, paths, w0=w0, threads=threads)


def price_policyholder(
    spec: ContractSpec,
    market: MarketParams,
    grid: TimeGrid | int,
    num_paths: int,
    seed: int,
    antithetic: bool = False,
    threads: int | None = None,
) -> tuple[float, float]:
    """Estimate ``V0`` and its standard error."""
    grid = as_grid(grid, spec)
    stats = _simulate(spec, market, grid, num_paths, seed, antithetic, threads)
    return mean_stderr(policyholder_values(stats, spec, market), antithetic)


def price_insurer_nolapse(
    spec: ContractSpec,
    market: MarketParams,
    grid: TimeGrid | int,
    num_paths: int,
    seed: int,
    antithetic: bool = False,
    threads: int | None = None,
) -> tuple[float, float]:
    """Estimate the rider value ``U0`` (no lapses) and its standard error."""
    grid = as_grid(grid, spec)
    stats = _simulate(spec, market, grid, num_paths, seed, antithetic, threads)
    return mean_stderr(insurer_values(stats, spec, market), antithetic)


def decompose(
    spec: ContractSpec,
    market: MarketParams,
    grid: TimeGrid | int,
    num_paths: int,
    seed: int,
    antithetic: bool = False,
    threads: int | None = None,
) -> ValuationReport:
    """``V0`` and ``U0`` from the same paths, with the residual of ``V0 = P + U0``."""
    grid = as_grid(grid, spec)
    stats = _simulate(spec, market, grid, num_paths, seed, antithetic, threads)
    v = policyholder_values(stats, spec, market)
    u = insurer_values(stats, spec, market)
    v0, v_se = mean_stderr(v, antithetic)
    u0, u_se = mean_stderr(u, antithetic)
    res, res_se = mean_stderr(v - spec.premium - u, antithetic)
    return ValuationReport(
        v0, v_se, u0, u_se, spec.premium, res, res_se,
        spec.fee_rate, num_paths, grid.steps_per_year, seed, antithetic,
    )


@dataclass(frozen=True)
class ValueSurface:
    """Markov value functions ``v(t, w)`` and ``u(t, w)`` on sampled points."""

    t: np.ndarray
    w: np.ndarray
    v: np.ndarray
    v_stderr: np.ndarray
    u: np.ndarray
    u_stderr: np.ndarray
    residual: np.ndarray
    residual_stderr: np.ndarray

    @property
    def moneyness(self) -> list[str]:
        """ITM when ``v > w`` and ``u > 0``, OTM when both reverse, else ATM."""
        labels = []
        for v, w, u in zip(self.v, self.w, self.u):
            if v > w and u > 0:
                labels.append("ITM")
            elif v < w and u < 0:
                labels.append("OTM")
            else:
                labels.append("ATM")
        return labels

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "w", "v", "u", "moneyness"])
            for row in zip(self.t, self.w, self.v, self.u, self.moneyness):
                out.writerow([repr(float(x)) for x in row[:4]] + [row[4]])


def value_surface(
    spec: ContractSpec,
    market: MarketParams,
    grid: TimeGrid | int,
    num_paths: int,
    seed: int,
    t_points: Sequence[float],
    w_points: Sequence[float],
    antithetic: bool = False,
    threads: int | None = None,
) -> ValueSurface:
    """Estimate ``v`` and ``u`` on the product of ``t_points`` and ``w_points``.

    Each point restarts the account at ``W_t = w`` on the remaining grid,
    with its own seed derived from ``seed`` and the point index.
    """
    grid = as_grid(grid, spec)
    rows = []
    for i, (t, w) in enumerate((t, w) for t in t_points for w in w_points):
        if not w > 0:
            raise ValueError("surface account values must be positive")
        tail = grid.tail(t)
        stats = _simulate(spec, market, tail, num_paths, derive_seed(seed, i), antithetic, threads, w0=float(w))
        v = policyholder_values(stats, spec, market)
        u = insurer_values(stats, spec, market)
        rows.append((t, w, *mean_stderr(v, antithetic), *mean_stderr(u, antithetic), *mean_stderr(v - w - u, antithetic)))
    cols = np.array(rows, dtype=float).reshape(-1, 8)
    return ValueSurface(*(cols[:, i].copy() for i in range(8)))
