"""Command-line front end.

Every command reads one JSON run configuration::

    {
      "contract": {"premium": 100, "withdrawal_rate": 0.1, "fee_rate": 0.01,
                   "cdsc": [{"until_year": 1, "charge": 0.08}],
                   "r": 0.05, "sigma": 0.2},
      "engine": {"steps_per_year": 252, "num_paths": 100000, "seed": 1,
                 "antithetic": false},
      "solver": {...}, "lapse": {...}, "surface": {...}, "oracle": {...}
    }

and writes JSON (CSV for ``boundary`` and ``surface``) with the resolved
configuration echoed in.  Exit status 2 flags an invalid configuration,
3 a numerical failure (diagnostics are written as JSON).
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .account import evolve, ruin_probability
from .contract import ContractSpec, MarketParams, ValidationError, config_dict, parse_config
from .fees import BracketError, NoSolutionError, solve_fair_fee
from .oracle import deterministic_value, tree_value
from .paths import TimeGrid, derive_seed, generate
from .surrender import BASES, exercise_boundary, fit_policy, price_with_lapse
from .valuation import decompose, value_surface

__all__ = ["main", "RunConfig", "load_run_config"]

log = logging.getLogger("gmwb")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_SECTIONS = {
    "engine": {"steps_per_year": 252, "num_paths": 100_000, "seed": 1, "antithetic": False},
    "solver": {"tol_value": None, "max_iter": 60, "confirm_paths": None, "confirm_seed": None, "model": "nolapse"},
    "lapse": {"basis": "hinge_log", "fit_paths": None, "fit_seed": None, "exercise_every": 1},
    "surface": {"t": [0.0, 2.5, 5.0, 7.5], "w": [25.0, 50.0, 100.0, 150.0]},
    "oracle": {"method": "auto", "steps_per_year": None, "w_points": 401, "with_lapse": True, "exercise_every": 1},
}


class RunConfig:
    """Parsed run configuration: contract, market and the command blocks."""

    def __init__(self, spec: ContractSpec, market: MarketParams, contract: dict, blocks: dict[str, dict]):
        self.spec = spec
        self.market = market
        self.contract = contract
        self.blocks = blocks

    @property
    def engine(self) -> dict:
        return self.blocks["engine"]

    def grid(self) -> TimeGrid:
        return TimeGrid(int(self.engine["steps_per_year"]), self.spec.maturity)

    def to_dict(self) -> dict:
        return {"contract": self.contract, **self.blocks}


def _check_block(name: str, given: Any, errors: list[str]) -> dict:
    defaults = _SECTIONS[name]
    if not isinstance(given, dict):
        errors.append(f"'{name}' must be an object")
        return dict(defaults)
    errors += [f"unknown field '{name}.{k}'" for k in sorted(set(given) - set(defaults))]
    return {**defaults, **given}


def load_run_config(doc: Any, overrides: dict | None = None) -> RunConfig:
    """Validate a run configuration document; raises :class:`ValidationError`."""
    if not isinstance(doc, dict):
        raise ValidationError(["configuration must be a JSON object"])
    errors = [f"unknown section '{k}'" for k in sorted(set(doc) - set(_SECTIONS) - {"contract"})]
    if "contract" not in doc:
        errors.append("missing section 'contract'")
    blocks = {name: _check_block(name, doc.get(name, {}), errors) for name in _SECTIONS}
    for key, value in (overrides or {}).items():
        if value is not None:
            blocks["engine"][key] = value
    eng = blocks["engine"]
    try:
        if int(eng["steps_per_year"]) < 1 or int(eng["num_paths"]) < 1:
            errors.append("engine.steps_per_year and engine.num_paths must be positive")
        if int(eng["seed"]) < 0:
            errors.append("engine.seed must be non-negative")
    except (TypeError, ValueError):
        errors.append("engine values must be integers")
    if blocks["lapse"]["basis"] not in BASES:
        errors.append(f"lapse.basis must be one of {list(BASES)}")
    if blocks["solver"]["model"] not in ("nolapse", "lapse"):
        errors.append("solver.model must be 'nolapse' or 'lapse'")
    if blocks["oracle"]["method"] not in ("auto", "tree", "deterministic"):
        errors.append("oracle.method must be 'auto', 'tree' or 'deterministic'")
    if errors:
        raise ValidationError(errors)
    spec, market = parse_config(doc["contract"] if isinstance(doc["contract"], dict) else {})
    try:
        TimeGrid(int(eng["steps_per_year"]), spec.maturity)
    except ValueError as exc:
        raise ValidationError([str(exc)]) from exc
    eng.update(
        steps_per_year=int(eng["steps_per_year"]),
        num_paths=int(eng["num_paths"]),
        seed=int(eng["seed"]),
        antithetic=bool(eng["antithetic"]),
    )
    return RunConfig(spec, market, config_dict(spec, market), blocks)


def _clean(x: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to ``None``."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# ---------------------------------------------------------------- commands


def _cmd_price(cfg: RunConfig, args) -> dict:
    eng, grid = cfg.engine, cfg.grid()
    rep = decompose(cfg.spec, cfg.market, grid, eng["num_paths"], eng["seed"], eng["antithetic"], args.threads)
    if args.export_paths or args.export_account:
        paths = generate(cfg.market, cfg.spec.fee_rate, grid, eng["num_paths"], eng["seed"], eng["antithetic"])
        if args.export_paths:
            paths.export(args.export_paths)
        if args.export_account:
            evolve(cfg.spec, paths, 0).to_csv(args.export_account)
    return rep.to_dict()


def _cmd_fair_fee(cfg: RunConfig, args) -> dict:
    eng, sol, lap = cfg.engine, cfg.blocks["solver"], cfg.blocks["lapse"]
    lapse_options = None
    if sol["model"] == "lapse":
        lapse_options = {"basis": lap["basis"], "exercise_every": int(lap["exercise_every"])}
        if lap["fit_seed"] is not None:
            lapse_options["fit_seed"] = int(lap["fit_seed"])
        if lap["fit_paths"] is not None:
            lapse_options["fit_paths"] = int(lap["fit_paths"])
    res = solve_fair_fee(
        cfg.spec, cfg.market, cfg.grid(), eng["num_paths"], eng["seed"],
        tol_value=sol["tol_value"], max_iter=int(sol["max_iter"]), antithetic=eng["antithetic"],
        threads=args.threads, confirm_paths=sol["confirm_paths"], confirm_seed=sol["confirm_seed"],
        model=sol["model"], lapse_options=lapse_options,
    )
    return res.to_dict()


def _fit(cfg: RunConfig, args):
    eng, lap = cfg.engine, cfg.blocks["lapse"]
    fit_seed = derive_seed(eng["seed"], 1) if lap["fit_seed"] is None else int(lap["fit_seed"])
    fit_paths = eng["num_paths"] if lap["fit_paths"] is None else int(lap["fit_paths"])
    return fit_policy(
        cfg.spec, cfg.market, cfg.grid(), fit_paths, fit_seed, basis=lap["basis"],
        exercise_every=int(lap["exercise_every"]), antithetic=eng["antithetic"], threads=args.threads,
    )


def _cmd_lapse_value(cfg: RunConfig, args) -> dict:
    eng = cfg.engine
    policy = _fit(cfg, args)
    if args.policy_out:
        Path(args.policy_out).write_text(policy.to_json())
    rep = price_with_lapse(
        cfg.spec, cfg.market, cfg.grid(), eng["num_paths"], eng["seed"], policy,
        antithetic=eng["antithetic"], threads=args.threads,
    )
    return rep.to_dict()


def _cmd_boundary(cfg: RunConfig, args) -> list[list]:
    points = exercise_boundary(_fit(cfg, args), cfg.spec)
    return [["t", "critical_w"]] + [[p.t, p.critical_w] for p in points]


def _cmd_ruin(cfg: RunConfig, args) -> dict:
    eng = cfg.engine
    est = ruin_probability(
        cfg.spec, cfg.market, cfg.grid(), eng["num_paths"], eng["seed"], eng["antithetic"], args.threads
    )
    return {
        "survival": est.survival,
        "ruin": est.ruin,
        "stderr": est.stderr,
        "survivors": est.survivors,
        "ruined": est.ruined,
        "num_paths": est.num_paths,
    }


def _cmd_surface(cfg: RunConfig, args) -> list[list]:
    eng, srf = cfg.engine, cfg.blocks["surface"]
    surf = value_surface(
        cfg.spec, cfg.market, cfg.grid(), eng["num_paths"], eng["seed"],
        [float(t) for t in srf["t"]], [float(w) for w in srf["w"]], eng["antithetic"], args.threads,
    )
    rows = [["t", "w", "v", "v_stderr", "u", "u_stderr", "residual", "residual_stderr", "moneyness"]]
    for i, label in enumerate(surf.moneyness):
        rows.append([surf.t[i], surf.w[i], surf.v[i], surf.v_stderr[i], surf.u[i], surf.u_stderr[i],
                     surf.residual[i], surf.residual_stderr[i], label])
    return rows


def _cmd_oracle(cfg: RunConfig, args) -> dict:
    orc = cfg.blocks["oracle"]
    method = orc["method"]
    if method == "auto":
        method = "deterministic" if cfg.market.sigma == 0.0 else "tree"
    if method == "deterministic":
        sol = deterministic_value(cfg.spec, cfg.market)
        return {"method": method, "tau": sol.tau, "w_terminal": sol.w_terminal, "v0": sol.v0,
                "u0": sol.u0, "fee_pv": sol.fee_pv}
    n = orc["steps_per_year"] or cfg.engine["steps_per_year"]
    res = tree_value(cfg.spec, cfg.market, int(n), bool(orc["with_lapse"]), int(orc["w_points"]),
                     int(orc["exercise_every"]))
    return {"method": method, **res.to_dict()}


COMMANDS = {
    "price": (_cmd_price, "json", "policyholder value, rider value and their decomposition"),
    "fair-fee": (_cmd_fair_fee, "json", "fee rate at which the contract is worth the premium"),
    "lapse-value": (_cmd_lapse_value, "json", "values with optimal surrender (least-squares Monte Carlo)"),
    "boundary": (_cmd_boundary, "csv", "surrender boundary per exercise date"),
    "ruin-prob": (_cmd_ruin, "json", "probability that the account survives to maturity"),
    "surface": (_cmd_surface, "csv", "value functions v(t, w) and u(t, w)"),
    "oracle": (_cmd_oracle, "json", "closed-form or binomial-tree reference values"),
}


# ------------------------------------------------------------------ output


def _provenance(command: str, cfg_dict: dict | None, canonical: bool, elapsed: float | None) -> dict:
    meta = {"command": command, "version": __version__, "config": cfg_dict}
    if not canonical:
        meta["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        meta["elapsed_s"] = round(elapsed, 3) if elapsed is not None else None
    return meta


def _render_json(meta: dict, payload: dict) -> str:
    return json.dumps(_clean({**meta, "result": payload}), indent=2, sort_keys=True) + "\n"


def _render_csv(meta: dict, rows: list[list]) -> str:
    buf = io.StringIO()
    for key in sorted(meta):
        buf.write(f"# {key}: {json.dumps(_clean(meta[key]), sort_keys=True)}\n")
    for row in rows:
        cells = []
        for x in row:
            if x is None:
                cells.append("")
            elif isinstance(x, (float, np.floating)):
                cells.append(repr(float(x)))
            else:
                cells.append(str(x))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gmwb", description="Value GMWB variable annuity contracts.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, fmt, helptext) in COMMANDS.items():
        c = sub.add_parser(name, help=helptext, description=helptext)
        c.add_argument("--config", "-c", required=True, help="run configuration (JSON)")
        c.add_argument("--output", "-o", help=f"write {fmt.upper()} here instead of stdout")
        c.add_argument("--canonical", action="store_true", help="omit timestamp and timing for byte-stable output")
        c.add_argument("--seed", type=int, help="override engine.seed")
        c.add_argument("--paths", type=int, help="override engine.num_paths")
        c.add_argument("--steps", type=int, help="override engine.steps_per_year")
        c.add_argument("--threads", type=int, help="worker threads (default: $GMWB_THREADS or 1)")
        c.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        if name == "price":
            c.add_argument("--export-paths", help="write the growth factors as raw little-endian float64, path-major")
            c.add_argument("--export-account", help="write path 0's account trajectory as CSV")
        if name == "lapse-value":
            c.add_argument("--policy-out", help="write the fitted surrender policy as JSON")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    logging.captureWarnings(True)
    fn, fmt, _ = COMMANDS[args.command]
    defaults = {"export_paths": None, "export_account": None, "policy_out": None}
    for k, v in defaults.items():
        if not hasattr(args, k):
            setattr(args, k, v)

    try:
        with open(args.config) as fh:
            doc = json.load(fh)
        cfg = load_run_config(doc, {"seed": args.seed, "num_paths": args.paths, "steps_per_year": args.steps})
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(args, None, EXIT_CONFIG, "invalid configuration", {"errors": [str(exc)]})
    except ValidationError as exc:
        return _fail(args, None, EXIT_CONFIG, "invalid configuration", {"errors": exc.errors})

    started = time.perf_counter()
    try:
        payload = fn(cfg, args)
    except BracketError as exc:
        return _fail(args, cfg, EXIT_NUMERIC, str(exc), exc.diagnostics)
    except (NoSolutionError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        return _fail(args, cfg, EXIT_NUMERIC, str(exc), {"type": type(exc).__name__})
    meta = _provenance(args.command, cfg.to_dict(), args.canonical, time.perf_counter() - started)
    _emit(_render_json(meta, payload) if fmt == "json" else _render_csv(meta, payload), args.output)
    return EXIT_OK


def _fail(args, cfg: RunConfig | None, code: int, message: str, diagnostics: dict) -> int:
    meta = _provenance(args.command, cfg.to_dict() if cfg else None, args.canonical, None)
    text = json.dumps(_clean({**meta, "error": message, "exit_code": code, "diagnostics": diagnostics}),
                      indent=2, sort_keys=True) + "\n"
    sys.stderr.write(text)
    if args.output:
        Path(args.output).write_text(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
