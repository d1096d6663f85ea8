"""Value functions away from issue, and the chance the account survives.

Each surface point restarts the account at ``W_t = w`` and simulates to
maturity.  Small accounts are rescued by the guarantee (the rider is worth
more than the fees it collects); large ones pay for it.
"""

from gmwb import ContractSpec, MarketParams
from gmwb.account import ruin_probability
from gmwb.paths import TimeGrid
from gmwb.valuation import value_surface

market = MarketParams(r=0.05, sigma=0.2)
spec = ContractSpec(100.0, 0.1, 0.01)

surf = value_surface(spec, market, 52, 20_000, 7, [0.0, 5.0], [25.0, 100.0, 150.0])
print("   t       w        v        u   label")
for t, w, v, u, label in zip(surf.t, surf.w, surf.v, surf.u, surf.moneyness):
    print(f"{t:4.1f}  {w:6.1f}  {v:7.2f}  {u:7.2f}   {label}")

for alpha in (0.0, 0.01, 0.05):
    est = ruin_probability(spec.with_fee(alpha), market, TimeGrid(52, spec.maturity), 50_000, 8)
    print(f"fee {alpha:.2f}: account still positive at maturity with probability {est.survival:.3f}")
