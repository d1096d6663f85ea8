"""Fair fee rate: the unique ``alpha`` with ``V0(alpha) = P``.

The sampled ``V0`` is strictly decreasing and continuous in ``alpha`` when
every evaluation reuses the same paths, so plain bisection on a bracket
``[0, alpha_hi]`` is robust to Monte Carlo noise.

Re-simulating for every bisection step is wasteful.  On the grid the
terminal account has the closed form

    W_T(alpha) = e^{-alpha T} Z0_T * max(0, P - G dt * sum_m e^{alpha t_m} / Z0_m)

(``Z0`` is the no-fee, no-withdrawal fund), and the sum is an entire function
of ``alpha``.  :class:`FeeCurve` keeps its Taylor coefficients per path, after
which ``V0(alpha)`` on the frozen paths costs one polynomial evaluation.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .account import mean_stderr
from .contract import ContractSpec, MarketParams, annuity
from .paths import TimeGrid, derive_seed, generate
from .valuation import as_grid, price_policyholder

__all__ = ["FeeCurve", "FeeSolveResult", "BracketError", "NoSolutionError", "solve_fair_fee"]

log = logging.getLogger(__name__)

_ORDER = 48
# largest alpha*T for which the truncated series is exact to ~1e-16 relative
_X_MAX = 7.5


class NoSolutionError(ValueError):
    pass


class BracketError(RuntimeError):
    """The sampled ``V0`` does not straddle the premium."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class FeeCurve:
    """Frozen path set reduced to per-path Taylor coefficients in ``alpha * T``.

    Scale-free in the premium: ``v0`` multiplies by ``spec.premium`` so that
    doubling the premium doubles every sampled value exactly.
    """

    spec: ContractSpec
    market: MarketParams
    grid: TimeGrid
    num_paths: int
    seed: int
    antithetic: bool
    coeffs: np.ndarray  # (paths, order + 1)
    z_terminal: np.ndarray
    threads: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(
        cls,
        spec: ContractSpec,
        market: MarketParams,
        grid: TimeGrid | int,
        num_paths: int,
        seed: int,
        antithetic: bool = False,
        threads: int | None = None,
        order: int = _ORDER,
    ) -> "FeeCurve":
        grid = as_grid(grid, spec)
        paths = generate(market, 0.0, grid, num_paths, seed, antithetic)
        n = grid.num_steps
        u = np.arange(1, n + 1) / n
        powers = u[:, None] ** np.arange(order + 1)[None, :]
        powers /= np.array([math.factorial(j) for j in range(order + 1)], dtype=float)

        def run(a, c, xi):
            logz = np.cumsum(paths.drift + paths.vol * xi, axis=1)
            mom = np.exp(-logz) @ powers
            zt = np.exp(logz[:, -1]) if n else np.ones(xi.shape[0])
            if xi.shape[0] != c - a:
                mom = np.broadcast_to(mom, (c - a, order + 1))
                zt = np.broadcast_to(zt, (c - a,))
            return mom, zt

        chunks = paths.map_chunks(run, threads)
        coeffs = np.concatenate([m for m, _ in chunks], axis=0)
        zt = np.concatenate([z for _, z in chunks])
        return cls(spec, market, grid, num_paths, seed, antithetic, coeffs, zt, threads)

    def per_path(self, alpha: float) -> np.ndarray:
        """Per-path discounted policyholder cashflows at fee rate ``alpha``."""
        T = self.grid.horizon
        x = alpha * T
        if x > _X_MAX:
            return None
        s = self.coeffs[:, -1].copy()
        for j in range(self.coeffs.shape[1] - 2, -1, -1):
            s *= x
            s += self.coeffs[:, j]
        gdt = self.spec.withdrawal_rate * self.grid.dt  # per unit premium
        w_unit = math.exp(-alpha * T) * self.z_terminal * np.maximum(0.0, 1.0 - gdt * s)
        r = self.market.r
        return self.spec.premium * (self.spec.withdrawal_rate * annuity(r, T) + math.exp(-r * T) * w_unit)

    def v0(self, alpha: float) -> tuple[float, float]:
        """Sampled ``V0(alpha)`` and standard error on the frozen paths."""
        alpha = float(alpha)
        if alpha not in self._cache:
            vals = self.per_path(alpha)
            if vals is None:
                # outside the series radius: fall back to simulating the same paths
                self._cache[alpha] = price_policyholder(
                    self.spec.with_fee(alpha), self.market, self.grid, self.num_paths,
                    self.seed, self.antithetic, self.threads,
                )
            else:
                self._cache[alpha] = mean_stderr(vals, self.antithetic)
        return self._cache[alpha]


@dataclass
class FeeSolveResult:
    alpha: float
    v0: float
    v0_stderr: float
    iterations: int
    brackets: list[tuple[float, float]]
    tolerance: float
    converged: bool
    num_paths: int
    seed: int
    model: str = "nolapse"
    confirmation: dict | None = None

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "v0": self.v0,
            "v0_stderr": self.v0_stderr,
            "iterations": self.iterations,
            "brackets": [list(b) for b in self.brackets],
            "tolerance": self.tolerance,
            "converged": self.converged,
            "num_paths": self.num_paths,
            "seed": self.seed,
            "model": self.model,
            "confirmation": self.confirmation,
        }


def _lapse_evaluator(spec, market, grid, num_paths, seed, antithetic, threads, lapse_options):
    from .surrender import fit_policy, price_with_lapse

    opts = dict(lapse_options or {})
    fit_seed = opts.pop("fit_seed", derive_seed(seed, 1))
    fit_paths = opts.pop("fit_paths", num_paths)

    def v0(alpha):
        s = spec.with_fee(alpha)
        policy = fit_policy(s, market, grid, fit_paths, fit_seed, antithetic=antithetic, threads=threads, **opts)
        rep = price_with_lapse(s, market, grid, num_paths, seed, policy, antithetic=antithetic, threads=threads)
        return rep.v0_lapse, rep.v0_lapse_stderr

    return v0


def solve_fair_fee(
    spec: ContractSpec,
    market: MarketParams,
    grid: TimeGrid | int,
    num_paths: int,
    seed: int,
    tol_value: float | None = None,
    max_iter: int = 60,
    antithetic: bool = False,
    threads: int | None = None,
    tol_alpha: float = 1e-9,
    confirm_paths: int | None = None,
    confirm_seed: int | None = None,
    model: str = "nolapse",
    lapse_options: dict | None = None,
) -> FeeSolveResult:
    """Bisect for the fee rate at which the contract is worth the premium.

    Parameters
    ----------
    spec : ContractSpec
        Contract; its ``fee_rate`` is ignored.
    tol_value : float, optional
        Stop once ``|V0 - P| < tol_value``; defaults to ``1e-6 * P``.
    tol_alpha : float
        Stop once the bracket around the root is narrower than this (about
        26 halvings from the initial bracket).
    confirm_paths : int, optional
        Re-price at the solution on ``confirm_paths`` fresh paths.
    model : {"nolapse", "lapse"}
        ``"lapse"`` solves against the surrender-model value; uniqueness of
        the root is not established there.

    Raises
    ------
    NoSolutionError
        If ``r <= 0``.
    BracketError
        If ``V0(0)`` is below the premium beyond Monte Carlo noise, or no
        upper bracket is found.
    """
    if not market.r > 0:
        raise NoSolutionError("no fair fee exists when the riskless rate is not positive")
    grid = as_grid(grid, spec)
    premium = spec.premium
    tol_value = 1e-6 * premium if tol_value is None else float(tol_value)
    if not tol_value > 0:
        raise ValueError("tol_value must be positive")

    if model == "nolapse":
        curve = FeeCurve.build(spec, market, grid, num_paths, seed, antithetic, threads)
        v0 = curve.v0
    elif model == "lapse":
        if spec.cdsc.charge(0.0) <= 0.0:
            raise ValueError("lapse-model fee needs a positive surrender charge at issue")
        warnings.warn("uniqueness of the fair fee is not established with lapses", UserWarning, stacklevel=2)
        v0 = _lapse_evaluator(spec, market, grid, num_paths, seed, antithetic, threads, lapse_options)
    else:
        raise ValueError(f"unknown model {model!r}")

    def result(alpha, v, se, iters, brackets, converged):
        res = FeeSolveResult(alpha, v, se, iters, brackets, abs(v - premium), converged, num_paths, seed, model)
        if confirm_paths:
            cseed = derive_seed(seed, 2) if confirm_seed is None else confirm_seed
            cv, cse = price_policyholder(spec.with_fee(alpha), market, grid, confirm_paths, cseed, antithetic, threads)
            res.confirmation = {"v0": cv, "v0_stderr": cse, "num_paths": confirm_paths, "seed": cseed}
        return res

    lo, hi = 0.0, 0.05
    v_lo, se_lo = v0(lo)
    # with no fee the contract is worth exactly P, up to the gap between the
    # annuity valuation and end-of-step withdrawals and Monte Carlo noise
    grid_gap = 0.5 * spec.annual_withdrawal * grid.dt * -math.expm1(-market.r * grid.horizon)
    if abs(v_lo - premium) < max(tol_value, grid_gap + 3.0 * se_lo):
        return result(0.0, v_lo, se_lo, 0, [], True)
    if v_lo < premium:
        if premium - v_lo > 3.0 * se_lo:
            raise BracketError(
                "V0 at zero fee is below the premium: inconsistent estimator",
                {"alpha": 0.0, "v0": v_lo, "v0_stderr": se_lo, "premium": premium},
            )
        return result(0.0, v_lo, se_lo, 0, [], False)

    brackets = []
    v_hi, se_hi = v0(hi)
    while v_hi >= premium:
        brackets.append((lo, hi))
        lo, hi = hi, 2.0 * hi
        if hi > 100.0:
            raise BracketError("no fee rate up to 100 brings V0 below the premium", {"brackets": brackets})
        v_hi, se_hi = v0(hi)
    brackets.append((lo, hi))
    if abs(v_hi - premium) < tol_value:
        return result(hi, v_hi, se_hi, 0, brackets, True)

    mid, v_mid, se_mid = hi, v_hi, se_hi
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        v_mid, se_mid = v0(mid)
        if v_mid > premium:
            lo = mid
        else:
            hi = mid
        brackets.append((lo, hi))
        log.debug("fee bisection %d: alpha=%.10f V0=%.6f", it, mid, v_mid)
        if abs(v_mid - premium) < tol_value or hi - lo < tol_alpha:
            return result(mid, v_mid, se_mid, it, brackets, True)
    return result(mid, v_mid, se_mid, max_iter, brackets, False)
