"""``admctl`` command-line front end.

Every subcommand reads a scenario file and writes plot-ready CSV (plus an
optional JSON mirror) into ``--out``. Exit codes: 0 success, 1 internal
error, 2 invalid input, 3 model too large.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import chain
from .errors import CapacityError, ValidationError
from .export import (
    policy_columns,
    policy_rows,
    read_policy,
    value_columns,
    value_rows,
    write_csv,
    write_json,
)
from .pipeline import build_model
from .robustness import RateBoundRow, TrueModelOverride, ratebound_sweep
from .scenario import LinkScenario, load_scenario
from .sim import batch_stats, sample_trajectory, Trajectory
from .ssp import decompose_cost, solve

log = logging.getLogger("admctl")

EXIT_OK, EXIT_INTERNAL, EXIT_VALIDATION, EXIT_CAPACITY = 0, 1, 2, 3


def _floats(text: str | None) -> list[float]:
    if not text:
        return []
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad numeric list {text!r}") from exc


def _tag(v: float) -> str:
    """Deterministic file-name fragment for a grid value."""
    return repr(float(v)).replace("-", "m").replace(".", "p")


def _jobs() -> int:
    try:
        return max(1, int(os.environ.get("ADMCTL_JOBS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    if _jobs() > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=_jobs()) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _utilities(model, parts) -> dict:
    r = model.start_row
    return {
        "elastic_utility": -float(parts.J_E[0, r]),
        "inelastic_utility": -float(parts.J_I[0, r]),
        "ratebound_cost": float(parts.J_0[0, r]),
        "total_utility": -float(parts.J[0, r]),
    }


# risk ------------------------------------------------------------------------
def cmd_risk(scenario: LinkScenario, rates: list[float], out: Path, as_json: bool) -> dict:
    d = scenario.grid
    if not rates:
        cs_rates = build_model(scenario).rates
        rates = sorted({float(cs_rates.min()), float(cs_rates.max())})
    summary = []
    for R in rates:
        p = chain.poisson_step_probs(R, d.delta_S, d.delta_T, d.M)
        P = chain.progress_matrix(p)
        rep = chain.risk_report(chain.propagate(P, d.N), d)
        write_csv(out / f"risk_R{_tag(R)}.csv", rep.columns, rep.rows())
        summary.append((R, rep.miss_risk))
    write_csv(out / "risk_summary.csv", ("R", "miss_risk"), summary)
    payload = {"rates": [r for r, _ in summary], "miss_risk": [m for _, m in summary]}
    if as_json:
        write_json(out / "risk_summary.json", payload)
    return payload


# solve / evaluate ------------------------------------------------------------
def cmd_solve(scenario: LinkScenario, out: Path, as_json: bool) -> dict:
    model = build_model(scenario)
    sol = solve(model)
    parts = decompose_cost(model, sol.policy)
    write_csv(out / "policy.csv", policy_columns(model), policy_rows(model, sol.policy))
    write_csv(out / "values.csv", value_columns(model), value_rows(model, parts))
    summary = _utilities(model, parts) | {"lambda_I": model.lambda_I, "n": model.n, "m": model.m}
    write_json(out / "summary.json", summary)
    return summary


def cmd_evaluate(scenario: LinkScenario, policy_path: Path, out: Path, as_json: bool) -> dict:
    model = build_model(scenario)
    mu = read_policy(policy_path, model)
    parts = decompose_cost(model, mu)
    write_csv(out / "values.csv", value_columns(model), value_rows(model, parts))
    summary = _utilities(model, parts) | {"lambda_I": model.lambda_I}
    write_json(out / "summary.json", summary)
    return summary


# simulate --------------------------------------------------------------------
def cmd_simulate(
    scenario: LinkScenario, policy_path: Path | None, count: int, seed: int, keep: int, out: Path, as_json: bool
) -> dict:
    model = build_model(scenario)
    mu = read_policy(policy_path, model) if policy_path else solve(model).policy
    stats = batch_stats(model, mu, count, seed)
    for j in range(min(keep, count)):
        tr = sample_trajectory(model, mu, seed, j)
        write_csv(out / f"trajectory_{j:06d}.csv", Trajectory.columns, tr.rows())
    payload = stats.as_dict() | {"seed": seed}
    write_json(out / "stats.json", payload)
    return payload


# sweeps ----------------------------------------------------------------------
def _lambda_point(args):
    scenario, lam = args
    model = build_model(scenario).with_lambda(lam)
    sol = solve(model)
    parts = decompose_cost(model, sol.policy)
    rows = list(policy_rows(model, sol.policy))
    return lam, _utilities(model, parts), rows, policy_columns(model)


def cmd_sweep_lambda(scenario: LinkScenario, grid: list[float], out: Path, as_json: bool) -> dict:
    if not grid:
        raise ValidationError("--grid must list at least one lambda value")
    if min(grid) < 0:
        raise ValidationError("lambda values must be >= 0")
    grid = sorted(grid)
    results = _pmap(_lambda_point, [(scenario, lam) for lam in grid])
    rows = []
    for lam, util, prow, pcols in results:
        write_csv(out / f"policy_lambda_{_tag(lam)}.csv", pcols, prow)
        rows.append((lam, util["elastic_utility"], util["inelastic_utility"], util["total_utility"]))
    cols = ("lambda", "elastic_utility", "inelastic_utility", "total_utility")
    write_csv(out / "sweep_lambda.csv", cols, rows)
    payload = {"columns": cols, "rows": rows}
    if as_json:
        write_json(out / "sweep_lambda.json", payload)
    return payload


def cmd_sweep_ratebound(
    scenario: LinkScenario, grid: list[float], true_bandwidths: list[float], out: Path, as_json: bool
) -> dict:
    if not grid:
        raise ValidationError("--grid must list at least one R0 value")
    overrides = [TrueModelOverride(b) for b in true_bandwidths]
    rows = ratebound_sweep(scenario, grid, overrides)
    write_csv(out / "sweep_ratebound.csv", RateBoundRow.columns, (r.values() for r in rows))
    payload = {"columns": RateBoundRow.columns, "rows": [r.values() for r in rows]}
    if as_json:
        write_json(out / "sweep_ratebound.json", payload)
    return payload


# entry point -----------------------------------------------------------------
def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="admctl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=Path("out"))
        sp.add_argument("--json", action="store_true", help="also write JSON mirrors")
        return sp

    sp = common(sub.add_parser("risk", help="fixed-rate risk predictions"))
    sp.add_argument("--grid", help="comma-separated elastic rates (Mbps)")

    common(sub.add_parser("solve", help="optimal admission policy"))

    sp = common(sub.add_parser("evaluate", help="evaluate a policy file"))
    sp.add_argument("--policy", required=True, type=Path)

    sp = common(sub.add_parser("simulate", help="Monte Carlo trajectories"))
    sp.add_argument("--policy", type=Path, help="policy CSV (default: the optimal policy)")
    sp.add_argument("--count", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--keep", type=int, default=10, help="trajectories written as CSV")

    sp = common(sub.add_parser("sweep-lambda", help="re-solve over a lambda grid"))
    sp.add_argument("--grid", required=True)

    sp = common(sub.add_parser("sweep-ratebound", help="rate-bound sweep under true bandwidths"))
    sp.add_argument("--grid", required=True, help="comma-separated R0 values")
    sp.add_argument("--true-bandwidth", default="", help="comma-separated true bandwidths")
    return p


def run(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        scenario = load_scenario(args.scenario)
        out = args.out
        if args.command == "risk":
            cmd_risk(scenario, _floats(args.grid), out, args.json)
        elif args.command == "solve":
            cmd_solve(scenario, out, args.json)
        elif args.command == "evaluate":
            cmd_evaluate(scenario, args.policy, out, args.json)
        elif args.command == "simulate":
            if args.count < 1:
                raise ValidationError("--count must be >= 1")
            cmd_simulate(scenario, args.policy, args.count, args.seed, args.keep, out, args.json)
        elif args.command == "sweep-lambda":
            cmd_sweep_lambda(scenario, _floats(args.grid), out, args.json)
        elif args.command == "sweep-ratebound":
            cmd_sweep_ratebound(scenario, _floats(args.grid), _floats(args.true_bandwidth), out, args.json)
    except CapacityError as exc:
        print(f"admctl: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except ValidationError as exc:
        print(f"admctl: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"admctl: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    log.info("wrote results to %s", args.out)
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
