"""Contract and market parameters for a variable annuity with a GMWB rider.

The rider guarantees withdrawals of ``G = g * P`` per year until the premium
``P`` is returned, so the contract matures at ``T = 1 / g``.  Surrender
charges follow a contingent deferred sales charge (CDSC) schedule, a
non-increasing piecewise-constant right-continuous function of duration.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = [
    "CdscSchedule",
    "ContractSpec",
    "MarketParams",
    "ValidationError",
    "NonMarketableWarning",
    "annuity",
    "cdsc_at",
    "validate",
    "load_config",
    "parse_config",
]

_TIME_EPS = 1e-12


class ValidationError(ValueError):
    """Raised when a contract or market configuration violates an invariant.

    ``errors`` holds one message per violated invariant.
    """

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class NonMarketableWarning(UserWarning):
    """Zero surrender charge at issue: immediate lapse leaves no unique fair fee."""


def annuity(r: float, h: float) -> float:
    """Present value of a continuously paid unit annuity over ``h`` years.

    Returns ``(1 - exp(-r h)) / r``.
    """
    if not r > 0:
        raise ValueError("riskless rate must be positive")
    if h < 0:
        raise ValueError("annuity term must be non-negative")
    return -math.expm1(-r * h) / r


def annuity_array(r: float, h: np.ndarray) -> np.ndarray:
    """Vectorised :func:`annuity` without argument checks."""
    return -np.expm1(-r * np.asarray(h, dtype=float)) / r


@dataclass(frozen=True)
class CdscSchedule:
    """Surrender-charge schedule as right-continuous step function.

    ``starts[i]`` is the duration (years) from which ``charges[i]`` applies,
    until ``starts[i + 1]``.  The last charge applies indefinitely, so a
    schedule that vanishes at maturity ends with a zero charge.
    """

    starts: tuple[float, ...]
    charges: tuple[float, ...]

    def __post_init__(self):
        if len(self.starts) != len(self.charges) or not self.starts:
            raise ValueError("CDSC breakpoints and charges must be non-empty and aligned")
        if self.starts[0] != 0.0:
            raise ValueError("CDSC schedule must start at duration 0")
        if any(b <= a for a, b in zip(self.starts, self.starts[1:])):
            raise ValueError("CDSC breakpoints must be strictly increasing")

    @classmethod
    def from_until(cls, rows: Iterable[tuple[float, float]]) -> "CdscSchedule":
        """Build from ``(until_year, charge)`` rows; zero after the last row."""
        starts, charges = [0.0], []
        for until, charge in rows:
            charges.append(float(charge))
            starts.append(float(until))
        charges.append(0.0)
        return cls(tuple(starts), tuple(charges))

    @classmethod
    def no_lapse(cls, maturity: float) -> "CdscSchedule":
        """Charge of 100% before maturity: surrender is never worthwhile."""
        return cls((0.0, float(maturity)), (1.0, 0.0))

    @classmethod
    def none(cls) -> "CdscSchedule":
        return cls((0.0,), (0.0,))

    @classmethod
    def declining(cls, first: float = 0.08, step: float = 0.01) -> "CdscSchedule":
        """Market-style schedule: ``first`` in year 1, down ``step`` each year."""
        years = int(round(first / step))
        return cls.from_until((y + 1, round(first - y * step, 12)) for y in range(years))

    def charge(self, s: float) -> float:
        i = int(np.searchsorted(self.starts, s + _TIME_EPS, side="right")) - 1
        return self.charges[max(i, 0)]

    def charges_at(self, s: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.starts, np.asarray(s) + _TIME_EPS, side="right") - 1
        return np.asarray(self.charges)[np.maximum(idx, 0)]

    def scaled(self, factor: float) -> "CdscSchedule":
        """Uniformly raise or lower the charges, clipped to [0, 1]."""
        return CdscSchedule(self.starts, tuple(min(1.0, c * factor) for c in self.charges))

    def to_rows(self) -> list[dict[str, float]]:
        """``until_year`` rows as used in JSON configs (trailing zero dropped)."""
        rows = []
        for i, c in enumerate(self.charges[:-1]):
            rows.append({"until_year": self.starts[i + 1], "charge": c})
        if self.charges[-1] != 0.0:
            rows.append({"until_year": math.inf, "charge": self.charges[-1]})
        return rows


def cdsc_at(schedule: CdscSchedule, s: float, maturity: float | None = None) -> float:
    """Surrender charge applicable at duration ``s``."""
    if s < 0 or (maturity is not None and s > maturity + _TIME_EPS):
        raise ValueError(f"duration {s} outside [0, {maturity}]")
    return schedule.charge(s)


@dataclass(frozen=True)
class MarketParams:
    """Black-Scholes market: riskless rate ``r``, volatility ``sigma``.

    ``mu`` is the real-world drift; risk-neutral pricing never reads it.
    """

    r: float
    sigma: float
    mu: float = 0.0


@dataclass(frozen=True)
class ContractSpec:
    premium: float
    withdrawal_rate: float
    fee_rate: float = 0.0
    cdsc: CdscSchedule = field(default_factory=CdscSchedule.none)

    @property
    def maturity(self) -> float:
        return 1.0 / self.withdrawal_rate

    @property
    def annual_withdrawal(self) -> float:
        return self.withdrawal_rate * self.premium

    def with_fee(self, fee_rate: float) -> "ContractSpec":
        return ContractSpec(self.premium, self.withdrawal_rate, float(fee_rate), self.cdsc)

    def with_premium(self, premium: float) -> "ContractSpec":
        return ContractSpec(float(premium), self.withdrawal_rate, self.fee_rate, self.cdsc)

    def with_cdsc(self, cdsc: CdscSchedule) -> "ContractSpec":
        return ContractSpec(self.premium, self.withdrawal_rate, self.fee_rate, cdsc)

    def surrender_charge(self, s: float) -> float:
        return cdsc_at(self.cdsc, s, self.maturity)


def _schedule_errors(cdsc: CdscSchedule, maturity: float | None) -> list[str]:
    errors = []
    if any(not 0.0 <= c <= 1.0 for c in cdsc.charges):
        errors.append("CDSC charges must lie in [0, 1]")
    if any(b > a for a, b in zip(cdsc.charges, cdsc.charges[1:])):
        errors.append("CDSC must be non-increasing")
    if maturity is not None and math.isfinite(maturity) and cdsc.charge(maturity) != 0.0:
        errors.append("CDSC must vanish at maturity")
    return errors


def validate(spec: ContractSpec, mkt: MarketParams) -> tuple[ContractSpec, MarketParams]:
    """Check every contract and market invariant.

    Returns the inputs unchanged when valid.  All violations are collected
    and raised together as a :class:`ValidationError`.  A zero charge at
    issue is legal but emits :class:`NonMarketableWarning`.
    """
    errors = []
    if not (math.isfinite(spec.premium) and spec.premium > 0):
        errors.append("premium must be positive")
    if not 0 < spec.withdrawal_rate <= 1:
        errors.append("withdrawal rate must lie in (0, 1]")
    if not (math.isfinite(spec.fee_rate) and spec.fee_rate >= 0):
        errors.append("fee rate must be non-negative")
    if not (math.isfinite(mkt.r) and mkt.r > 0):
        errors.append("riskless rate must be positive")
    if not (math.isfinite(mkt.sigma) and mkt.sigma >= 0):
        errors.append("volatility must be non-negative")
    maturity = spec.maturity if 0 < spec.withdrawal_rate <= 1 else None
    errors.extend(_schedule_errors(spec.cdsc, maturity))
    if errors:
        raise ValidationError(errors)
    if spec.cdsc.charge(0.0) == 0.0:
        warnings.warn(
            "zero surrender charge at issue: contract is not marketable",
            NonMarketableWarning,
            stacklevel=2,
        )
    return spec, mkt


_CONFIG_FIELDS = {"premium", "withdrawal_rate", "fee_rate", "cdsc", "r", "sigma", "mu"}
_REQUIRED = {"premium", "withdrawal_rate", "r", "sigma"}


def parse_config(doc: dict[str, Any]) -> tuple[ContractSpec, MarketParams]:
    """Build and validate a contract/market pair from a JSON-like mapping.

    Unknown fields are rejected.  ``cdsc`` is a list of
    ``{"until_year": ..., "charge": ...}`` rows; omitted means no charges.
    """
    errors = [f"unknown field '{k}'" for k in sorted(set(doc) - _CONFIG_FIELDS)]
    errors += [f"missing field '{k}'" for k in sorted(_REQUIRED - set(doc))]
    cdsc = CdscSchedule.none()
    rows = doc.get("cdsc", [])
    try:
        parsed = []
        for row in rows:
            extra = set(row) - {"until_year", "charge"}
            if extra:
                errors.append(f"unknown CDSC field(s) {sorted(extra)}")
            parsed.append((float(row["until_year"]), float(row["charge"])))
        if parsed:
            cdsc = CdscSchedule.from_until(parsed)
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"malformed CDSC schedule: {exc}")
    if errors:
        raise ValidationError(errors)
    try:
        spec = ContractSpec(
            float(doc["premium"]),
            float(doc["withdrawal_rate"]),
            float(doc.get("fee_rate", 0.0)),
            cdsc,
        )
        mkt = MarketParams(float(doc["r"]), float(doc["sigma"]), float(doc.get("mu", 0.0)))
    except (TypeError, ValueError) as exc:
        raise ValidationError([f"non-numeric parameter: {exc}"]) from exc
    return validate(spec, mkt)


def load_config(path: str | Path) -> tuple[ContractSpec, MarketParams]:
    with open(path) as fh:
        return parse_config(json.load(fh))


def config_dict(spec: ContractSpec, mkt: MarketParams) -> dict[str, Any]:
    """Inverse of :func:`parse_config`."""
    return {
        "premium": spec.premium,
        "withdrawal_rate": spec.withdrawal_rate,
        "fee_rate": spec.fee_rate,
        "cdsc": spec.cdsc.to_rows(),
        "r": mkt.r,
        "sigma": mkt.sigma,
        "mu": mkt.mu,
    }
