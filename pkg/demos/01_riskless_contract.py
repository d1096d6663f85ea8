"""A GMWB contract in a riskless market.

With zero volatility the account follows an ODE and everything has a closed
form.  The simulator runs one shared path, so comparing it with the closed
form isolates the time-discretisation error.
"""

from gmwb import ContractSpec, MarketParams, decompose, deterministic_value

market = MarketParams(r=0.05, sigma=0.0)
spec = ContractSpec(premium=100.0, withdrawal_rate=0.1, fee_rate=0.10)

sol = deterministic_value(spec, market)
print(f"account runs dry at tau = {sol.tau:.4f} years (maturity {spec.maturity:g})")
print(f"closed form:  V0 = {sol.v0:.5f}   U0 = {sol.u0:.5f}   fees PV = {sol.fee_pv:.5f}")

for n in (52, 252, 2520):
    rep = decompose(spec, market, n, 1000, seed=1)
    print(f"n = {n:>4}:   V0 = {rep.v0:.5f}   U0 = {rep.u0_nl:.5f}   V0 - (P + U0) = {rep.residual:+.2e}")

# without a fee the contract is worth exactly its premium; the grid adds G dt / 2 per unit annuity
free = spec.with_fee(0.0)
for n in (252, 504, 1008):
    rep = decompose(free, market, n, 1000, seed=1)
    print(f"no fee, n = {n:>4}: V0 - P = {rep.v0 - 100:.6f}")
