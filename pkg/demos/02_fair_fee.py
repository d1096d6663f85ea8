"""Solve for the fair rider fee and check it on fresh paths.

The bisection runs on one fixed path set, so the sampled value curve is
exactly monotone in the fee and the root is well defined.  A confirmation
run on an independent seed shows how much the answer moves with the sample.
"""

import numpy as np

from gmwb import ContractSpec, FeeCurve, MarketParams, solve_fair_fee

market = MarketParams(r=0.05, sigma=0.2)
spec = ContractSpec(premium=100.0, withdrawal_rate=0.1)

curve = FeeCurve.build(spec, market, 52, 50_000, 3)
print(" fee     V0      stderr")
for alpha in np.linspace(0.0, 0.03, 7):
    v, se = curve.v0(alpha)
    print(f"{alpha:.3f}  {v:8.3f}  {se:.3f}")

res = solve_fair_fee(spec, market, 52, 50_000, 3, confirm_paths=100_000, confirm_seed=4)
print(f"\nfair fee {res.alpha:.5f} after {res.iterations} bisection steps (V0 = {res.v0:.4f})")
conf = res.confirmation
print(f"fresh paths at that fee: V0 = {conf['v0']:.3f} +- {conf['v0_stderr']:.3f}")

for sigma in (0.1, 0.3):
    other = solve_fair_fee(spec, MarketParams(0.05, sigma), 52, 50_000, 3)
    print(f"sigma = {sigma}: fair fee {other.alpha:.5f}")
