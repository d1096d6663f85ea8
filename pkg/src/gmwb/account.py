"""GMWB account evolution along simulated paths.

Discrete scheme on the grid ``t_k = k * dt``: the fund grows by the full-step
factor ``R_k``, then ``G * dt`` is withdrawn at the end of the step.  The
account is absorbed at zero (the trigger).  A withdrawal the account can only
partly fund is topped up by the guarantee, so the policyholder always
receives ``G * dt``.

Fee ledger: the fee for step ``k`` is ``W_k R_k (exp(alpha dt) - 1)``, the
value the fee drag removes over the step, paid at ``t_{k+1}``.  With this
entry the discounted account is a martingale plus withdrawals and fees, which
makes the policyholder/insurer split exact in expectation on the grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .contract import ContractSpec, MarketParams
from .paths import PathSet, TimeGrid, generate

__all__ = [
    "AccountPath",
    "AccountStats",
    "TriggerTimes",
    "RuinEstimate",
    "evolve",
    "trigger",
    "simulate",
    "simulate_ladder",
    "account_trajectories",
    "ruin_probability",
    "mean_stderr",
]

_CHECK_ROWS = 512


def mean_stderr(x: np.ndarray, antithetic: bool = False) -> tuple[float, float]:
    """Sample mean and its 1-sigma standard error.

    Antithetic samples are averaged in pairs first so the error reflects the
    pair correlation.
    """
    x = np.asarray(x, dtype=float)
    if antithetic:
        x = 0.5 * (x[0::2] + x[1::2])
    n = x.size
    mean = float(np.mean(x))
    if n < 2:
        return mean, 0.0
    return mean, float(np.std(x, ddof=1) / math.sqrt(n))


@dataclass(frozen=True)
class AccountPath:
    """One account trajectory with its cashflows.

    ``withdrawals[k]`` and ``fees[k]`` are paid at ``times[k]`` (both zero at
    ``k = 0``); ``withdrawals`` is the part funded by the account and
    ``guarantee`` the part funded by the rider.
    """

    times: np.ndarray
    z: np.ndarray
    values: np.ndarray
    withdrawals: np.ndarray
    fees: np.ndarray
    guarantee: np.ndarray
    trigger_index: int | None

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "Z", "W", "withdrawal", "fee"])
            for row in zip(self.times, self.z, self.values, self.withdrawals, self.fees):
                out.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class TriggerTimes:
    """Trigger time ``tau`` with ``tau_t = max(tau, t)`` and ``tau_bar_t = min(tau_t, T)``."""

    tau: float
    tau_t: float
    tau_bar_t: float


@dataclass
class AccountStats:
    """Per-path reductions of a simulated path set.

    Discounting is to the start of ``grid`` (the valuation time).
    """

    grid: TimeGrid
    antithetic: bool
    terminal: np.ndarray
    trigger_step: np.ndarray
    shortfall: np.ndarray
    fees: np.ndarray
    record_steps: np.ndarray
    w_at: np.ndarray
    fees_at: np.ndarray

    @property
    def num_paths(self) -> int:
        return self.terminal.size

    @property
    def triggered(self) -> np.ndarray:
        return self.trigger_step >= 0


def _check_alpha(spec: ContractSpec, paths: PathSet) -> None:
    if spec.fee_rate != paths.alpha:
        raise ValueError(
            f"fee rate mismatch: contract has {spec.fee_rate}, paths were generated at {paths.alpha}"
        )


def evolve(spec: ContractSpec, paths: PathSet, j: int, w0: float | None = None) -> AccountPath:
    """Account trajectory and cashflows along path ``j``."""
    _check_alpha(spec, paths)
    grid = paths.grid
    n = grid.num_steps
    growth = paths.growth_factors(j, j + 1)[0] if n else np.empty(0)
    gdt = spec.annual_withdrawal * grid.dt
    fee_mult = math.expm1(paths.alpha * grid.dt)

    z = np.empty(n + 1)
    z[0] = 1.0
    np.cumprod(growth, out=z[1:])
    w = np.zeros(n + 1)
    withdrawals = np.zeros(n + 1)
    fees = np.zeros(n + 1)
    guarantee = np.zeros(n + 1)
    w[0] = spec.premium if w0 is None else w0
    hit = None
    for k in range(n):
        if w[k] > 0.0:
            x = w[k] * growth[k]
            fees[k + 1] = x * fee_mult
            if x > gdt:
                w[k + 1] = x - gdt
                withdrawals[k + 1] = gdt
            else:
                withdrawals[k + 1] = x
                guarantee[k + 1] = gdt - x
                hit = k + 1
        else:
            guarantee[k + 1] = gdt
    return AccountPath(grid.times, z, w, withdrawals, fees, guarantee, hit)


def trigger(account: AccountPath, t: float) -> TriggerTimes:
    """Trigger-time statistics seen from time ``t``."""
    maturity = float(account.times[-1])
    if not 0.0 <= t <= maturity:
        raise ValueError(f"time {t} outside [0, {maturity}]")
    tau = math.inf if account.trigger_index is None else float(account.times[account.trigger_index])
    tau_t = max(tau, t)
    return TriggerTimes(tau, tau_t, min(tau_t, maturity))


def simulate_ladder(
    spec: ContractSpec,
    paths: PathSet,
    alphas,
    w0: float | None = None,
    record_steps=(),
    threads: int | None = None,
    check=None,
) -> list[AccountStats]:
    """Simulate one path set at several fee rates on common random numbers.

    ``paths.alpha`` is ignored; each fee rate in ``alphas`` reuses the same
    normals.  When supplied, ``check(start, stop, trajectories)`` receives the
    full trajectories of paths ``start:stop`` at every rate, shape
    ``(len(alphas), stop - start, steps + 1)``, a few hundred paths at a time
    (diagnostics only: it roughly doubles the run time).  A riskless path set
    passes its single shared path.
    """
    grid = paths.grid
    n = grid.num_steps
    alphas = [float(a) for a in alphas]
    rec = np.asarray(record_steps, dtype=np.int64)
    if rec.size and (np.any(np.diff(rec) < 0) or rec[0] < 0 or rec[-1] > n):
        raise ValueError("record steps must be sorted grid indices")
    start_w = float(spec.premium if w0 is None else w0)
    gdt = spec.annual_withdrawal * grid.dt
    disc = np.exp(-paths.market.r * grid.times)
    sets = [paths.with_alpha(a) for a in alphas]

    def run(a: int, c: int, xi: np.ndarray):
        rows = xi.shape[0]
        res = []
        for ps in sets:
            out = np.empty((rows, 4))
            w_rec, fee_rec = _kernels.empty_records(rows, rec.size)
            _kernels.run_accounts(
                xi, start_w, ps.drift, ps.vol, gdt, math.expm1(ps.alpha * grid.dt), disc, rec, w_rec, fee_rec, out
            )
            if rows != c - a:
                out = np.broadcast_to(out, (c - a, 4))
                w_rec = np.broadcast_to(w_rec, (c - a, rec.size))
                fee_rec = np.broadcast_to(fee_rec, (c - a, rec.size))
            res.append((out, w_rec, fee_rec))
        if check is not None:
            # sub-blocks keep the all-rates trajectory buffer small
            for s in range(0, rows, _CHECK_ROWS):
                e = min(s + _CHECK_ROWS, rows)
                traj = np.empty((len(sets), e - s, n + 1))
                for i, ps in enumerate(sets):
                    _kernels.account_paths(
                        xi[s:e], start_w, ps.drift, ps.vol, gdt, math.expm1(ps.alpha * grid.dt), traj[i]
                    )
                check(a + s, a + e, traj)
        return res

    chunks = paths.map_chunks(run, threads)
    stats = []
    for i in range(len(sets)):
        out = np.concatenate([ch[i][0] for ch in chunks], axis=0)
        stats.append(
            AccountStats(
                grid=grid,
                antithetic=paths.antithetic,
                terminal=out[:, 0].copy(),
                trigger_step=out[:, 1].astype(np.int64),
                shortfall=out[:, 2].copy(),
                fees=out[:, 3].copy(),
                record_steps=rec,
                w_at=np.concatenate([ch[i][1] for ch in chunks], axis=0),
                fees_at=np.concatenate([ch[i][2] for ch in chunks], axis=0),
            )
        )
    return stats


def simulate(
    spec: ContractSpec,
    paths: PathSet,
    w0: float | None = None,
    record_steps=(),
    threads: int | None = None,
) -> AccountStats:
    """Per-path account statistics for ``paths`` (fee rate must match ``spec``)."""
    _check_alpha(spec, paths)
    return simulate_ladder(spec, paths, [paths.alpha], w0, record_steps, threads)[0]


def account_trajectories(spec: ContractSpec, paths: PathSet, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Full account trajectories for a range of paths, ``(paths, steps + 1)``."""
    _check_alpha(spec, paths)
    xi = paths.normals(start, stop)
    out = np.empty((xi.shape[0], paths.grid.num_steps + 1))
    _kernels.account_paths(
        np.ascontiguousarray(xi),
        float(spec.premium),
        paths.drift,
        paths.vol,
        spec.annual_withdrawal * paths.grid.dt,
        math.expm1(paths.alpha * paths.grid.dt),
        out,
    )
    return out


@dataclass(frozen=True)
class RuinEstimate:
    """Estimate of ``Q(W_T > 0)`` with its binomial standard error."""

    survival: float
    stderr: float
    survivors: int
    ruined: int

    @property
    def ruin(self) -> float:
        return 1.0 - self.survival

    @property
    def num_paths(self) -> int:
        return self.survivors + self.ruined


def ruin_probability(
    spec: ContractSpec,
    market: MarketParams,
    grid: TimeGrid,
    num_paths: int,
    seed: int,
    antithetic: bool = False,
    threads: int | None = None,
) -> RuinEstimate:
    if num_paths < 1000:
        raise ValueError("ruin probability needs at least 1000 paths")
    stats = simulate(spec, generate(market, spec.fee_rate, grid, num_paths, seed, antithetic), threads=threads)
    survivors = int(np.count_nonzero(stats.terminal > 0.0))
    p = survivors / num_paths
    return RuinEstimate(p, math.sqrt(p * (1.0 - p) / num_paths), survivors, num_paths - survivors)
