"""Optimal surrender under a declining surrender charge.

A stopping rule is fitted by least-squares Monte Carlo on one path set and
priced on another.  The report splits the lapse value into the no-lapse
value and the surrender option, and checks the identities that tie them.
"""

from gmwb import (
    CdscSchedule,
    ContractSpec,
    MarketParams,
    exercise_boundary,
    fit_policy,
    price_with_lapse,
)

market = MarketParams(r=0.05, sigma=0.2)
spec = ContractSpec(100.0, 0.1, 0.01, CdscSchedule.declining(0.08, 0.01))

policy = fit_policy(spec, market, 52, 50_000, seed=1, exercise_every=4)
rep = price_with_lapse(spec, market, 52, 50_000, seed=2, policy=policy)

print(f"V0 with lapses    {rep.v0_lapse:8.3f} +- {rep.v0_lapse_stderr:.3f}")
print(f"V0 without        {rep.v0_nl:8.3f} +- {rep.v0_nl_stderr:.3f}")
print(f"surrender option  {rep.l0_direct:8.3f} +- {rep.l0_direct_stderr:.3f}")
print(f"paths surrendered {rep.exercise_fraction:8.1%}")
print(f"V - (P + U)       {rep.residual_vwu:+8.4f} +- {rep.residual_vwu_stderr:.4f}")
print(f"L - (V - V_NL)    {rep.residual_lv:+8.4f} +- {rep.residual_lv_stderr:.4f}")

print("\nsurrender above this account value:")
for p in exercise_boundary(policy, spec)[::13]:
    level = "never" if p.critical_w is None else f"{p.critical_w:7.2f}"
    print(f"  t = {p.t:5.2f}  charge {spec.surrender_charge(p.t):.2f}  {level}")

# with a charge of 100% the right to surrender is worthless
locked = spec.with_cdsc(CdscSchedule.no_lapse(spec.maturity))
rep = price_with_lapse(locked, market, 52, 20_000, 2, fit_policy(locked, market, 52, 20_000, 1))
print(f"\nlocked-in contract: surrender option = {rep.l0_direct}")
