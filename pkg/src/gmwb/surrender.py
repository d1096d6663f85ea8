"""Optimal early surrender by least-squares Monte Carlo.

The policyholder may surrender at an exercise date before the trigger and
receive ``W (1 - k(t))``; otherwise the contract runs to maturity.  A
stopping policy is fitted backward on one path set (regressing realised
continuation values on functions of the account value) and then applied
forward on an independent path set, which gives a low-biased estimate of the
optimal-stopping value.

Per path, with ``eta`` the surrender date (or ``T``):

* policyholder:  ``G a(eta) + e^{-r eta} W_eta (1 - k_eta)``
* insurer:       no-lapse rider value if ``eta = T``, else
  ``-fees(0, eta) - e^{-r eta} W_eta k_eta`` (charges go to the insurer)
* lapse option:  ``fees(eta, T) - guarantee - e^{-r eta} W_eta k_eta`` when
  surrendering early, else 0.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .account import mean_stderr, simulate
from .contract import ContractSpec, MarketParams, annuity, annuity_array
from .paths import TimeGrid, generate
from .valuation import as_grid, guarantee_values, insurer_values, policyholder_values

__all__ = [
    "StoppingPolicy",
    "LapseReport",
    "BoundaryPoint",
    "basis_functions",
    "exercise_steps",
    "fit_policy",
    "price_with_lapse",
    "exercise_boundary",
]

log = logging.getLogger(__name__)

BASES = ("hinge_log", "cubic_hinge", "cubic_kink", "cubic")


def basis_functions(w: np.ndarray, t: float, spec: ContractSpec, basis: str = "hinge_log") -> np.ndarray:
    """Regression design matrix in the premium-scaled account value ``x = w / P``.

    All bases start from ``{1, x, x^2, x^3}``.  The continuation value bends
    where the remaining guaranteed withdrawals ``K = g (T - t)`` start to
    exceed the account:

    * ``cubic_kink`` adds ``x * 1{x < K}`` (discontinuous at ``K``)
    * ``cubic_hinge`` adds ``max(0, K - x)``
    * ``hinge_log`` adds ``max(0, K - x)`` and ``log x``; the log term
      captures the slow decay of the guarantee value for large accounts
    * ``cubic`` adds nothing
    """
    x = np.asarray(w, dtype=float) / spec.premium
    cols = [np.ones_like(x), x, x * x, x * x * x]
    k = spec.withdrawal_rate * (spec.maturity - t)
    if basis == "cubic_kink":
        cols.append(x * (x < k))
    elif basis == "cubic_hinge":
        cols.append(np.maximum(0.0, k - x))
    elif basis == "hinge_log":
        cols.append(np.maximum(0.0, k - x))
        cols.append(np.log(x))
    elif basis != "cubic":
        raise ValueError(f"unknown basis {basis!r}")
    return np.stack(cols, axis=-1)


def exercise_steps(grid: TimeGrid, every: int = 1) -> np.ndarray:
    """Surrender dates as grid indices: ``0, every, 2*every, ...`` before maturity."""
    if every < 1:
        raise ValueError("exercise spacing must be a positive number of steps")
    return np.arange(0, grid.num_steps, every, dtype=np.int64)


@dataclass(frozen=True)
class StoppingPolicy:
    """Fitted surrender rule.

    ``coefficients[i]`` gives the continuation-value regression at
    ``steps[i]`` (``None``: never surrender there); ``w_ranges[i]`` is the
    span of account values the fit saw.
    """

    steps: tuple[int, ...]
    coefficients: tuple[tuple[float, ...] | None, ...]
    w_ranges: tuple[tuple[float, float] | None, ...]
    basis: str
    steps_per_year: int
    horizon: float
    fee_rate: float
    seed: int
    num_paths: int

    def continuation(self, i: int, w, spec: ContractSpec) -> np.ndarray:
        """Fitted value of continuing at date ``i``: ``w`` plus the rider share."""
        coef = self.coefficients[i]
        t = self.steps[i] / self.steps_per_year
        w = np.asarray(w, dtype=float)
        return w + spec.premium * (basis_functions(w, t, spec, self.basis) @ np.asarray(coef))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "StoppingPolicy":
        d = json.loads(text)
        return cls(
            steps=tuple(int(s) for s in d["steps"]),
            coefficients=tuple(None if c is None else tuple(c) for c in d["coefficients"]),
            w_ranges=tuple(None if r is None else tuple(r) for r in d["w_ranges"]),
            basis=d["basis"],
            steps_per_year=int(d["steps_per_year"]),
            horizon=float(d["horizon"]),
            fee_rate=float(d["fee_rate"]),
            seed=int(d["seed"]),
            num_paths=int(d["num_paths"]),
        )


def fit_policy(
    spec: ContractSpec,
    market: MarketParams,
    grid: TimeGrid | int,
    num_paths: int,
    seed: int,
    basis: str = "hinge_log",
    exercise_every: int = 1,
    antithetic: bool = False,
    threads: int | None = None,
) -> StoppingPolicy:
    """Fit a surrender policy by backward induction over the exercise dates."""
    grid = as_grid(grid, spec)
    if grid.horizon != spec.maturity:
        raise ValueError("surrender policies are fitted over the whole contract")
    if spec.cdsc.charge(0.0) == 0.0:
        log.warning("zero surrender charge at issue: the product is not marketable")
    steps = exercise_steps(grid, exercise_every)
    paths = generate(market, spec.fee_rate, grid, num_paths, seed, antithetic)
    stats = simulate(spec, paths, record_steps=steps, threads=threads)

    r, G, P = market.r, spec.annual_withdrawal, spec.premium
    n = grid.num_steps
    times = steps * grid.dt
    charges = spec.cdsc.charges_at(times)
    ncols = basis_functions(np.ones(1), 0.0, spec, basis).shape[1]
    # discrete withdrawal annuity from 0 to each grid index, paid at step ends
    disc_annuity = np.concatenate([[0.0], np.cumsum(grid.dt * np.exp(-r * grid.times[1:]))])

    # Realised stopping state per path, everything discounted to 0.  With no
    # surrender yet the contract runs to T (or the trigger).
    m = stats.num_paths
    stop_t = np.full(m, grid.horizon)
    acct_end = np.where(stats.triggered, stats.trigger_step, n)
    fee_end = stats.fees.copy()
    shortfall = np.where(stats.triggered, np.exp(-r * stats.trigger_step * grid.dt) * stats.shortfall, 0.0)
    charge_pv = np.zeros(m)

    coefficients: list = [None] * steps.size
    w_ranges: list = [None] * steps.size
    for i in range(steps.size - 1, -1, -1):
        t = times[i]
        w = stats.w_at[:, i]
        proceeds = w * (1.0 - charges[i])
        idx = np.flatnonzero((w > 0.0) & (proceeds > 0.0))
        if idx.size == 0:
            continue
        # rider share of the continuation: policyholder cashflows minus the
        # stopped account martingale, whose conditional mean is w
        share = (
            G * (annuity_array(r, stop_t[idx]) - annuity(r, t))
            - G * (disc_annuity[acct_end[idx]] - disc_annuity[steps[i]])
            + shortfall[idx]
            - (fee_end[idx] - stats.fees_at[idx, i])
            - charge_pv[idx]
        ) * math.exp(r * t) / P
        wi = w[idx]
        if np.ptp(wi) == 0.0:
            coef = np.zeros(ncols)
            coef[0] = share.mean()
        elif idx.size < 2 * ncols:
            log.warning("too few paths to regress at t=%.4f; no surrender there", t)
            continue
        else:
            X = basis_functions(wi, t, spec, basis)
            coef, _, rank, _ = np.linalg.lstsq(X, share, rcond=None)
            if rank < ncols:
                log.warning("singular continuation regression at t=%.4f; no surrender there", t)
                continue
        coefficients[i] = tuple(float(c) for c in coef)
        w_ranges[i] = (float(wi.min()), float(wi.max()))
        fitted = wi + P * (basis_functions(wi, t, spec, basis) @ coef)
        ex = idx[proceeds[idx] > fitted]
        stop_t[ex] = t
        acct_end[ex] = steps[i]
        fee_end[ex] = stats.fees_at[ex, i]
        shortfall[ex] = 0.0
        charge_pv[ex] = math.exp(-r * t) * w[ex] * charges[i]

    return StoppingPolicy(
        steps=tuple(int(s) for s in steps),
        coefficients=tuple(coefficients),
        w_ranges=tuple(w_ranges),
        basis=basis,
        steps_per_year=grid.steps_per_year,
        horizon=grid.horizon,
        fee_rate=spec.fee_rate,
        seed=seed,
        num_paths=num_paths,
    )


@dataclass(frozen=True)
class LapseReport:
    """Out-of-sample values with optimal surrender and the decomposition checks.

    ``l0_direct`` is the surrender-option value computed from its own
    cashflows; ``l0_from_v`` is ``v0_lapse - v0_nl``.  Residuals:
    ``v0_lapse - (P + u0_lapse)``, ``v0_lapse - (P + u0_nl + l0_direct)`` and
    ``l0_direct - (v0_lapse - v0_nl)``.
    """

    v0_lapse: float
    v0_lapse_stderr: float
    u0_lapse: float
    u0_lapse_stderr: float
    l0_direct: float
    l0_direct_stderr: float
    l0_from_v: float
    l0_from_v_stderr: float
    v0_nl: float
    v0_nl_stderr: float
    u0_nl: float
    u0_nl_stderr: float
    residual_vwu: float
    residual_vwu_stderr: float
    residual_vwul: float
    residual_vwul_stderr: float
    residual_lv: float
    residual_lv_stderr: float
    exercise_fraction: float
    w0: float
    fee_rate: float
    num_paths: int
    seed: int
    fit_seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def _stopping_index(policy: StoppingPolicy, spec: ContractSpec, w_at: np.ndarray, charges: np.ndarray) -> np.ndarray:
    stop = np.full(w_at.shape[0], -1, dtype=np.int64)
    for i, coef in enumerate(policy.coefficients):
        if coef is None:
            continue
        w = w_at[:, i]
        proceeds = w * (1.0 - charges[i])
        idx = np.flatnonzero((stop < 0) & (w > 0.0) & (proceeds > 0.0))
        if idx.size == 0:
            continue
        ex = proceeds[idx] > policy.continuation(i, w[idx], spec)
        stop[idx[ex]] = i
    return stop


def price_with_lapse(
    spec: ContractSpec,
    market: MarketParams,
    grid: TimeGrid | int,
    num_paths: int,
    seed: int,
    policy: StoppingPolicy,
    antithetic: bool = False,
    threads: int | None = None,
) -> LapseReport:
    """Apply ``policy`` on fresh paths and report lapse and no-lapse values."""
    grid = as_grid(grid, spec)
    if seed == policy.seed:
        raise ValueError("pricing seed must differ from the seed the policy was fitted on")
    if grid.steps_per_year != policy.steps_per_year or grid.horizon != policy.horizon:
        raise ValueError("policy was fitted on a different time grid")
    if spec.fee_rate != policy.fee_rate:
        raise ValueError("policy was fitted at a different fee rate")

    steps = np.asarray(policy.steps, dtype=np.int64)
    paths = generate(market, spec.fee_rate, grid, num_paths, seed, antithetic)
    stats = simulate(spec, paths, record_steps=steps, threads=threads)
    r, G, P = market.r, spec.annual_withdrawal, spec.premium
    times = steps * grid.dt
    charges = spec.cdsc.charges_at(times)

    v_nl = policyholder_values(stats, spec, market)
    u_nl = insurer_values(stats, spec, market)
    gpv = guarantee_values(stats, spec, market)

    stop = _stopping_index(policy, spec, stats.w_at, charges)
    early = stop >= 0
    rows = np.flatnonzero(early)
    cols = stop[early]
    eta = times[cols]
    w_eta = stats.w_at[rows, cols]
    k_eta = charges[cols]
    disc = np.exp(-r * eta)

    v_l = v_nl.copy()
    u_l = u_nl.copy()
    l_dir = np.zeros(num_paths)
    v_l[rows] = G * annuity_array(r, eta) + disc * w_eta * (1.0 - k_eta)
    u_l[rows] = -stats.fees_at[rows, cols] - disc * w_eta * k_eta
    l_dir[rows] = (stats.fees[rows] - stats.fees_at[rows, cols]) - gpv[rows] - disc * w_eta * k_eta

    ms = lambda x: mean_stderr(x, antithetic)  # noqa: E731
    return LapseReport(
        *ms(v_l), *ms(u_l), *ms(l_dir), *ms(v_l - v_nl), *ms(v_nl), *ms(u_nl),
        *ms(v_l - P - u_l), *ms(v_l - P - u_nl - l_dir), *ms(l_dir - (v_l - v_nl)),
        exercise_fraction=float(early.mean()),
        w0=P,
        fee_rate=spec.fee_rate,
        num_paths=num_paths,
        seed=seed,
        fit_seed=policy.seed,
    )


@dataclass(frozen=True)
class BoundaryPoint:
    t: float
    critical_w: float | None


def exercise_boundary(policy: StoppingPolicy, spec: ContractSpec, resolution: int = 1024) -> list[BoundaryPoint]:
    """Smallest account value at which the fitted rule surrenders, per date.

    The search stays inside the range of account values the regression saw;
    a boundary equal to the lower end of that range means every fitted state
    surrenders.  ``None`` marks dates where the rule never surrenders.
    """
    out = []
    for i, coef in enumerate(policy.coefficients):
        t = policy.steps[i] / policy.steps_per_year
        if coef is None:
            out.append(BoundaryPoint(t, None))
            continue
        keep = 1.0 - spec.cdsc.charge(t)
        lo, hi = policy.w_ranges[i]

        def gain(w):
            return np.asarray(w) * keep - policy.continuation(i, w, spec)

        if lo == hi:
            # a single fitted state (the issue date)
            out.append(BoundaryPoint(t, float(lo) if gain(np.array([lo]))[0] > 0 else None))
            continue
        ws = np.linspace(lo, hi, resolution)
        g = gain(ws)
        hits = np.flatnonzero(g > 0)
        if hits.size == 0:
            out.append(BoundaryPoint(t, None))
            continue
        j = hits[0]
        if j == 0:
            out.append(BoundaryPoint(t, float(lo)))
            continue
        a, b = ws[j - 1], ws[j]
        for _ in range(60):
            mid = 0.5 * (a + b)
            if gain(np.array([mid]))[0] > 0:
                b = mid
            else:
                a = mid
        out.append(BoundaryPoint(t, float(b)))
    return out


def boundary_to_csv(points: list[BoundaryPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "critical_w"])
        for p in points:
            out.writerow([repr(float(p.t)), "" if p.critical_w is None else repr(p.critical_w)])
