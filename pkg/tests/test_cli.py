import json
import subprocess
import sys

import numpy as np
import pytest

from gmwb.cli import load_run_config, main
from gmwb.contract import ValidationError

CONTRACT = {
    "premium": 100,
    "withdrawal_rate": 0.5,
    "fee_rate": 0.04,
    "cdsc": [{"until_year": 1, "charge": 0.03}, {"until_year": 2, "charge": 0.01}],
    "r": 0.05,
    "sigma": 0.2,
}
SMALL = {
    "contract": CONTRACT,
    "engine": {"steps_per_year": 12, "num_paths": 4000, "seed": 3},
    "lapse": {"fit_paths": 4000, "fit_seed": 9},
    "surface": {"t": [0.0, 1.0], "w": [20.0, 100.0]},
    "solver": {"max_iter": 40},
}


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def _run(tmp_path, command, doc, *extra, name="out"):
    out = tmp_path / name
    code = main([command, "-c", _write(tmp_path, doc), "-o", str(out), *extra])
    return code, out.read_text()


@pytest.mark.parametrize("command", ["price", "fair-fee", "lapse-value", "ruin-prob", "oracle"])
def test_json_commands_run(tmp_path, command):
    code, text = _run(tmp_path, command, SMALL)
    assert code == 0
    doc = json.loads(text)
    assert doc["command"] == command and "timestamp" in doc
    assert doc["config"]["engine"]["num_paths"] == 4000
    assert isinstance(doc["result"], dict)


@pytest.mark.parametrize("command,header", [("boundary", "t,critical_w"), ("surface", "t,w,v,")])
def test_csv_commands_run(tmp_path, command, header):
    code, text = _run(tmp_path, command, SMALL, "--canonical")
    assert code == 0
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert body[0].startswith(header)
    assert len(body) == (25 if command == "boundary" else 5)
    assert "# command: " in text


@pytest.mark.parametrize("command", ["price", "boundary", "lapse-value", "fair-fee"])
def test_canonical_output_is_byte_identical(tmp_path, command):
    _, a = _run(tmp_path, command, SMALL, "--canonical", name="a")
    _, b = _run(tmp_path, command, SMALL, "--canonical", "--threads", "3", name="b")
    assert a == b
    assert "timestamp" not in a and "elapsed_s" not in a


def test_riskless_price_and_fee(tmp_path):
    doc = {"contract": {"premium": 100, "withdrawal_rate": 0.1, "r": 0.05, "sigma": 0.0},
           "engine": {"steps_per_year": 252, "num_paths": 1000}}
    _, text = _run(tmp_path, "price", doc)
    assert json.loads(text)["result"]["v0"] == pytest.approx(100.0, abs=0.02)
    _, text = _run(tmp_path, "fair-fee", doc)
    assert json.loads(text)["result"]["alpha"] == 0.0
    _, text = _run(tmp_path, "oracle", doc)
    res = json.loads(text)["result"]
    assert res["method"] == "deterministic" and res["v0"] == pytest.approx(100.0, abs=1e-9)


def test_ruin_probability_is_interior(tmp_path):
    _, text = _run(tmp_path, "ruin-prob", {**SMALL, "contract": {**CONTRACT, "withdrawal_rate": 0.1}})
    res = json.loads(text)["result"]
    assert 0 < res["survival"] < 1 and res["survivors"] + res["ruined"] == 4000


def test_overrides_reach_the_engine(tmp_path):
    _, text = _run(tmp_path, "price", SMALL, "--seed", "11", "--paths", "500", "--steps", "4")
    eng = json.loads(text)["config"]["engine"]
    assert (eng["seed"], eng["num_paths"], eng["steps_per_year"]) == (11, 500, 4)


def test_exports(tmp_path):
    raw, acct = tmp_path / "g.bin", tmp_path / "acct.csv"
    doc = {**SMALL, "engine": {"steps_per_year": 12, "num_paths": 10, "seed": 3}}
    code, _ = _run(tmp_path, "price", doc, "--export-paths", str(raw), "--export-account", str(acct))
    assert code == 0
    assert np.fromfile(raw, dtype="<f8").shape == (10 * 24,)
    assert len(acct.read_text().splitlines()) == 26


def test_policy_out_round_trips(tmp_path):
    from gmwb.surrender import StoppingPolicy

    pol = tmp_path / "policy.json"
    code, _ = _run(tmp_path, "lapse-value", SMALL, "--policy-out", str(pol))
    assert code == 0
    assert StoppingPolicy.from_json(pol.read_text()).seed == 9


@pytest.mark.parametrize(
    "doc",
    [
        {"contract": {**CONTRACT, "sigma": -0.1}},
        {"contract": CONTRACT, "engine": {"paths": 10}},
        {"contract": CONTRACT, "extras": {}},
        {"engine": {}},
        {"contract": {**CONTRACT, "cdsc": [{"until_year": 1, "charge": 1.5}]}},
        {"contract": CONTRACT, "lapse": {"basis": "chebyshev"}},
    ],
)
def test_invalid_config_exits_2(tmp_path, capsys, doc):
    code, text = _run(tmp_path, "price", doc)
    assert code == 2
    err = json.loads(text)
    assert err["exit_code"] == 2 and err["diagnostics"]["errors"]
    assert json.loads(capsys.readouterr().err) == err


def test_unreadable_config_exits_2(tmp_path):
    assert main(["price", "-c", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["price", "-c", str(bad)]) == 2


def test_numerical_failure_exits_3(tmp_path):
    # a coarse tree with tiny volatility has no valid branching probability
    doc = {**SMALL, "contract": {**CONTRACT, "sigma": 0.01}, "oracle": {"steps_per_year": 1}}
    code, text = _run(tmp_path, "oracle", doc)
    assert code == 3
    err = json.loads(text)
    assert err["exit_code"] == 3 and err["diagnostics"]["type"] == "ValueError"
    assert err["config"]["contract"]["sigma"] == 0.01


def test_nonpositive_rate_is_a_config_error(tmp_path):
    code, _ = _run(tmp_path, "fair-fee", {**SMALL, "contract": {**CONTRACT, "r": -0.01}})
    assert code == 2


def test_load_run_config_fills_defaults():
    cfg = load_run_config({"contract": CONTRACT})
    assert cfg.engine == {"steps_per_year": 252, "num_paths": 100_000, "seed": 1, "antithetic": False}
    assert cfg.blocks["lapse"]["basis"] == "hinge_log"
    with pytest.raises(ValidationError):
        load_run_config([1, 2])


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, {**SMALL, "engine": {"steps_per_year": 12, "num_paths": 200}})
    out = subprocess.run([sys.executable, "-m", "gmwb", "price", "-c", cfg, "--canonical"],
                         capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["result"]["num_paths"] == 200
