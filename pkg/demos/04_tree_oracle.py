"""Cross-check least-squares Monte Carlo against a binomial tree.

On a two-year contract the tree (with the account value interpolated on a
grid at each level) is an accurate reference for the optimal-surrender value.
The Monte Carlo rule is suboptimal, so it should sit at or below the tree up
to sampling and interpolation error.
"""

from gmwb import CdscSchedule, ContractSpec, MarketParams, fit_policy, price_with_lapse, tree_value

spec = ContractSpec(100.0, 0.5, 0.06, CdscSchedule.from_until([(1.0, 0.03), (2.0, 0.01)]))

print("sigma   tree V0   tree L0    LSMC V0  (stderr)   LSMC L0")
for sigma in (0.1, 0.2, 0.3):
    market = MarketParams(0.05, sigma)
    tree = tree_value(spec, market, 12)
    policy = fit_policy(spec, market, 12, 100_000, 5)
    rep = price_with_lapse(spec, market, 12, 100_000, 6, policy)
    print(f"{sigma:5.1f}  {tree.v0:8.3f}  {tree.l0:8.3f}   {rep.v0_lapse:8.3f}  ({rep.v0_lapse_stderr:.3f})  {rep.l0_direct:8.3f}")

market = MarketParams(0.05, 0.2)
print("\ntree accuracy against the number of account grid points:")
for points in (101, 401, 1601):
    print(f"  {points:>5} points: V0 = {tree_value(spec, market, 12, w_points=points).v0:.4f}")
