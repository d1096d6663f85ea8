"""Valuation of variable annuities with guaranteed minimum withdrawal benefits."""

__version__ = "0.1.0"

from .contract import (
    CdscSchedule,
    ContractSpec,
    MarketParams,
    NonMarketableWarning,
    ValidationError,
    annuity,
    cdsc_at,
    load_config,
    parse_config,
    validate,
)
from .paths import PathSet, TimeGrid, generate, z_path
from .account import AccountPath, TriggerTimes, evolve, ruin_probability, trigger
from .valuation import (
    ValuationReport,
    ValueSurface,
    decompose,
    price_insurer_nolapse,
    price_policyholder,
    value_surface,
)
from .fees import BracketError, FeeCurve, FeeSolveResult, NoSolutionError, solve_fair_fee
from .surrender import LapseReport, StoppingPolicy, exercise_boundary, fit_policy, price_with_lapse
from .oracle import DeterministicSolution, TreeResult, deterministic_value, enumerate_value, tree_value
