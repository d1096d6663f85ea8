import warnings

import pytest

from gmwb import CdscSchedule, ContractSpec, MarketParams, NonMarketableWarning


@pytest.fixture(autouse=True)
def _quiet_marketability():
    # many fixtures deliberately use schedules without a charge at issue
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonMarketableWarning)
        yield


@pytest.fixture
def market():
    return MarketParams(r=0.05, sigma=0.2)


@pytest.fixture
def riskless():
    return MarketParams(r=0.05, sigma=0.0)


@pytest.fixture
def contract():
    return ContractSpec(premium=100.0, withdrawal_rate=0.1, fee_rate=0.01, cdsc=CdscSchedule.declining())


@pytest.fixture
def short_contract():
    """Two-year contract (g = 0.5) small enough for the lattice oracles."""
    return ContractSpec(100.0, 0.5, 0.06, CdscSchedule.from_until([(1.0, 0.03), (2.0, 0.01)]))


_VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record a one-line pass/fail verdict for an acceptance criterion."""
    store = request.config.stash.setdefault(_VERDICTS, {})

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        store[number] = line
        print(line, flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_VERDICTS, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for number in sorted(store):
            terminalreporter.write_line(store[number])
