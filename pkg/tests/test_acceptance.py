"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they
are produced; they are also collected in the terminal summary.  The full
suite takes several minutes (the million-path fee solve dominates).
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from gmwb.account import ruin_probability, simulate_ladder
from gmwb.contract import CdscSchedule, ContractSpec, MarketParams, annuity
from gmwb.fees import NoSolutionError, solve_fair_fee
from gmwb.oracle import deterministic_value, tree_value
from gmwb.paths import TimeGrid, generate
from gmwb.surrender import fit_policy, price_with_lapse
from gmwb.valuation import decompose, policyholder_values, price_policyholder, value_surface

pytestmark = pytest.mark.slow

M = 100_000
N = 252
MARKET = MarketParams(0.05, 0.2)
RISKLESS = MarketParams(0.05, 0.0)
BASE = ContractSpec(100.0, 0.1)


def test_1_self_financing_on_the_grid(verdict):
    start = time.perf_counter()
    v252, _ = price_policyholder(BASE, RISKLESS, 252, M, 1)
    elapsed = time.perf_counter() - start
    v504, _ = price_policyholder(BASE, RISKLESS, 504, M, 1)
    v1008, _ = price_policyholder(BASE, RISKLESS, 1008, M, 1)
    bias = [v - 100.0 for v in (v252, v504, v1008)]
    ratios = [bias[1] / bias[0], bias[2] / bias[1]]
    # first-order grid bias: each doubling halves it up to an O(dt^2) term
    ok = abs(bias[0]) <= 0.02 and all(0 < q <= 0.5 + 1e-3 for q in ratios) and elapsed < 5.0
    detail = f"bias n=252/504/1008 = {bias[0]:.6f}/{bias[1]:.6f}/{bias[2]:.6f}, ratios {ratios[0]:.7f} {ratios[1]:.7f}, {elapsed:.2f}s"
    assert verdict(1, ok, detail)


def test_2_deterministic_insurer_value(verdict):
    spec = BASE.with_fee(0.10)
    rep = decompose(spec, RISKLESS, 2520, M, 1)
    sol = deterministic_value(spec, RISKLESS)
    ok = abs(rep.v0 - 78.6939) <= 0.02 and abs(rep.u0_nl + 21.306) <= 0.02 and abs(rep.residual) <= 0.005
    detail = (f"V0={rep.v0:.5f} U0={rep.u0_nl:.5f} residual={rep.residual:.2e} "
              f"(closed form {sol.v0:.5f}, {sol.u0:.5f})")
    assert verdict(2, ok, detail)


def test_3_monotone_in_fee_on_common_numbers(verdict):
    alphas = [round(0.005 * i, 3) for i in range(11)]
    paths = generate(MARKET, 0.0, TimeGrid(N, BASE.maturity), M, 2024)
    violations = [0]

    def check(start, stop, traj):
        violations[0] += int(np.count_nonzero(np.diff(traj, axis=0) > 0.0))

    stats = simulate_ladder(BASE, paths, alphas, check=check)
    values = [policyholder_values(s, BASE, MARKET) for s in stats]
    means = [v.mean() for v in values]
    z = []
    for a, b in zip(values, values[1:]):
        d = a - b
        z.append(d.mean() / (d.std(ddof=1) / math.sqrt(d.size)))
    ok = violations[0] == 0 and all(b < a for a, b in zip(means, means[1:])) and all(x > 3 for x in z[:5])
    detail = (f"V0 {means[0]:.3f} -> {means[-1]:.3f}, min gap {min(z):.0f} joint se, "
              f"{violations[0]} ordering violations")
    assert verdict(3, ok, detail)


def test_4_fair_fee_exists_and_is_stable(verdict):
    first = solve_fair_fee(BASE, MARKET, N, M, 7)
    second = solve_fair_fee(BASE, MARKET, N, 10 * M, 8)
    try:
        solve_fair_fee(BASE, MarketParams(0.0, 0.2), N, 1000, 1)
        refused = False
    except NoSolutionError:
        refused = True
    ok = (first.converged and abs(first.v0 - 100.0) < 0.05 and first.iterations <= 30
          and abs(first.alpha - second.alpha) < 2e-3 and refused)
    detail = (f"alpha*={first.alpha:.6f} ({first.iterations} it, |V0-P|={abs(first.v0 - 100):.1e}), "
              f"M=1e6 re-solve {second.alpha:.6f}, r=0 refused={refused}")
    assert verdict(4, ok, detail)


def test_5_fee_limits(verdict):
    v_lo, se_lo = price_policyholder(BASE, MARKET, N, M, 11)
    v_hi, se_hi = price_policyholder(BASE.with_fee(5.0), MARKET, N, M, 11)
    annuity_value = BASE.annual_withdrawal * annuity(MARKET.r, BASE.maturity)
    gap = v_hi - annuity_value
    ok = v_lo >= 100.0 - 3 * se_lo and abs(gap) <= 3 * se_hi
    detail = f"V0(0)={v_lo:.4f} (se {se_lo:.4f}), V0(5)-G*a_T={gap:.2e} (se {se_hi:.1e})"
    assert verdict(5, ok, detail)


def test_6_decomposition(verdict):
    spec = BASE.with_fee(0.01)
    rep = decompose(spec, MARKET, N, M, 13)
    rng = np.random.default_rng(6)
    t = np.sort(rng.integers(0, 40, 5) * 0.25)
    w = rng.uniform(10.0, 200.0, 5)
    points = [value_surface(spec, MARKET, N, M, 14 + i, [t[i]], [w[i]]) for i in range(5)]
    worst = max(abs(p.residual[0]) / p.residual_stderr[0] for p in points)
    ok = abs(rep.residual) < 4 * rep.residual_stderr and worst < 4
    detail = f"time-0 residual {rep.residual:+.4f} (joint se {rep.residual_stderr:.4f}); surface worst {worst:.2f} se"
    assert verdict(6, ok, detail)


def test_7_ruin_is_possible_but_not_certain(verdict):
    ests = [ruin_probability(BASE.with_fee(a), MARKET, TimeGrid(N, 10.0), M, 17) for a in (0.0, 0.05)]
    ok = all(0 < e.survival < 1 and min(e.survivors, e.ruined) >= 10 for e in ests)
    detail = ", ".join(f"alpha={a}: Q(W_T>0)={e.survival:.4f} ({e.survivors}/{e.ruined})"
                       for a, e in zip((0.0, 0.05), ests))
    assert verdict(7, ok, detail)


def test_8_lapse_decomposition(verdict):
    spec = BASE.with_fee(0.01).with_cdsc(CdscSchedule.declining())
    policy = fit_policy(spec, MARKET, N, M, 19, exercise_every=21)
    rep = price_with_lapse(spec, MARKET, N, M, 20, policy)
    ok = (abs(rep.residual_vwu) < 4 * rep.residual_vwu_stderr
          and abs(rep.residual_lv) < 4 * rep.residual_lv_stderr)
    detail = (f"V0_lapse={rep.v0_lapse:.4f} L0={rep.l0_direct:.4f}; "
              f"V-(P+U) {rep.residual_vwu:+.4f} (se {rep.residual_vwu_stderr:.4f}), "
              f"L-(V-V_NL) {rep.residual_lv:+.4f} (se {rep.residual_lv_stderr:.4f})")
    assert verdict(8, ok, detail)


def test_9_degenerate_schedules(verdict):
    locked = BASE.with_fee(0.01).with_cdsc(CdscSchedule.no_lapse(BASE.maturity))
    policy = fit_policy(locked, MARKET, N, M, 21, exercise_every=21)
    rep_locked = price_with_lapse(locked, MARKET, N, M, 22, policy)
    free = BASE.with_fee(0.10).with_cdsc(CdscSchedule.none())
    policy = fit_policy(free, MARKET, N, M, 23, exercise_every=21)
    rep_free = price_with_lapse(free, MARKET, N, M, 24, policy)
    ok = (rep_locked.l0_direct == 0.0 and rep_locked.exercise_fraction == 0.0
          and rep_free.v0_lapse == 100.0 and rep_free.exercise_fraction == 1.0)
    detail = (f"k=1: L0={rep_locked.l0_direct}, exercised {rep_locked.exercise_fraction}; "
              f"k=0, alpha=0.1: V0={rep_free.v0_lapse}, exercised {rep_free.exercise_fraction}")
    assert verdict(9, ok, detail)


def test_10_lsmc_against_tree(verdict):
    spec = ContractSpec(100.0, 0.5, 0.06, CdscSchedule.from_until([(1.0, 0.03), (2.0, 0.01)]))
    start = time.perf_counter()
    rows, ok = [], True
    for sigma in (0.1, 0.2, 0.3):
        market = MarketParams(0.05, sigma)
        policy = fit_policy(spec, market, 12, M, 5)
        rep = price_with_lapse(spec, market, 12, M, 6, policy)
        tree = tree_value(spec, market, 12)
        band = 3 * rep.v0_lapse_stderr + 0.05
        ok &= tree.v0 - band <= rep.v0_lapse <= tree.v0 + band
        rows.append(f"s={sigma}: {rep.v0_lapse:.3f} vs {tree.v0:.3f} (+-{band:.3f})")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60.0
    assert verdict(10, ok, "; ".join(rows) + f"; {elapsed:.1f}s")


def test_11_cli_is_deterministic(verdict, tmp_path):
    cfg = {
        "contract": {"premium": 100, "withdrawal_rate": 0.5, "fee_rate": 0.04, "r": 0.05, "sigma": 0.2,
                     "cdsc": [{"until_year": 1, "charge": 0.03}, {"until_year": 2, "charge": 0.01}]},
        "engine": {"steps_per_year": 12, "num_paths": 20_000, "seed": 3},
        "surface": {"t": [0.0, 1.0], "w": [50.0, 100.0]},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    commands = ["price", "fair-fee", "lapse-value", "boundary", "ruin-prob", "surface", "oracle"]

    def run(command, threads):
        out = subprocess.run(
            [sys.executable, "-m", "gmwb", command, "-c", str(path), "--canonical", "--threads", str(threads)],
            capture_output=True, check=True,
        )
        return out.stdout

    differing = [c for c in commands if not run(c, 1) == run(c, 1) == run(c, 3)]
    ok = not differing
    detail = f"{len(commands)} commands x (2 runs, 1 and 3 threads): " + ("byte-identical" if ok else f"differ: {differing}")
    assert verdict(11, ok, detail)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-s", "-q"]))
