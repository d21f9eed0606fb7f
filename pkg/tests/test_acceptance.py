"""Acceptance checks, one PASS/FAIL line per criterion.

Run directly (``python tests/test_acceptance.py``) or through pytest; under
pytest the lines are repeated in the terminal summary.
"""

from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from admctl import chain  # noqa: E402
from admctl.cli import run as cli_run  # noqa: E402
from admctl.pipeline import build_control, build_model  # noqa: E402
from admctl.robustness import TrueModelOverride, mismatch_eval, rate_bound_cost, ratebound_sweep  # noqa: E402
from admctl.scenario import load_scenario, scenario_from_dict  # noqa: E402
from admctl.sim import batch_stats, sample_paths  # noqa: E402
from admctl.ssp import Policy, assemble_model, constant_policy, decompose_cost, evaluate_policy, solve  # noqa: E402

from conftest import small_scenario  # noqa: E402
from oracles import geometric_absorption, naive_dp  # noqa: E402

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
RESULTS: list[str] = []


def report(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def baseline():
    return load_scenario(SCENARIOS / "baseline.yaml")


def test_c01_baseline_utility():
    t0 = time.perf_counter()
    model = build_model(baseline())
    sol = solve(model)
    elapsed = time.perf_counter() - t0
    u = -sol.cost.initial(model)
    ok = abs(u - 1.866) <= 0.02 and elapsed < 30.0 and model.m == 51
    report("C1 baseline utility", ok, f"utility {u:.5f} (target 1.866 +/- 0.02), m={model.m}, {elapsed:.2f} s (< 30 s)")


def _dominance(model, rng, n_random=100):
    J1 = solve(model).cost.initial(model)
    worst = -math.inf
    for a in range(1, model.m + 1):
        worst = max(worst, J1 - evaluate_policy(model, constant_policy(model, a)).initial(model))
    for _ in range(n_random):
        table = rng.integers(1, model.m + 1, size=(model.N + 1, model.width)).astype(np.int32)
        worst = max(worst, J1 - evaluate_policy(model, Policy(table)).initial(model))
    return worst


def test_c02_dominance():
    rng = np.random.default_rng(2002)
    worst = _dominance(build_model(baseline()), rng)
    for t in range(20):
        sc = small_scenario(rng, max_M=20, max_N=20, max_flows=7, rate_bound=bool(t % 4 == 3))
        model = build_model(sc)
        assert model.m <= 8 and model.M <= 20 and model.N <= 20
        worst = max(worst, _dominance(model, rng))
    report("C2 dominance", worst <= 1e-9, f"max J*(1) - J_mu(1) = {worst:.3e} over baseline + 20 instances (slack 1e-9)")


def test_c03_oracle():
    rng = np.random.default_rng(303)
    worst, mismatches = 0.0, 0
    for t in range(200):
        sc = small_scenario(rng, max_M=6, max_N=6, max_flows=2, rate_bound=bool(t % 2))
        V, pol = naive_dp(
            bandwidth=sc.bandwidth,
            size=sc.size,
            deadline=sc.deadline,
            flows=[(f.load, f.reward_rate) for f in sc.flows],
            M=sc.steps,
            N=sc.stages,
            lambda_I=sc.lambda_I,
            R0=sc.rate_bound,
        )
        sol = solve(build_model(sc))
        worst = max(worst, float(np.abs(sol.cost.J - np.array(V)).max()))
        mismatches += not np.array_equal(sol.policy.table, np.array(pol))
    ok = worst <= 1e-12 and mismatches == 0
    report("C3 oracle equivalence", ok, f"sup-norm {worst:.2e} (<= 1e-12), policy mismatches {mismatches}/200")


def test_c04_chain():
    d = baseline().grid
    sums_exact = all(
        math.fsum(chain.poisson_step_probs(R, d.delta_S, d.delta_T, d.M)) == 1.0
        for R in np.linspace(0.0, 400.0, 401)
    )
    rates = np.linspace(0.0, 200.0, 50)
    risks = [
        chain.deadline_miss_risk(chain.progress_matrix(chain.poisson_step_probs(R, d.delta_S, d.delta_T, d.M)), d.N)
        for R in rates
    ]
    monotone = bool(np.all(np.diff(risks) <= 0))
    geo = 0.0
    for c in (0.05, 0.3, 0.9):
        f = chain.propagate(chain.progress_matrix([1 - c, c]), 60)
        geo = max(geo, max(abs(f[k, 1] - geometric_absorption(c, k)) for k in range(61)))
    ok = sums_exact and monotone and geo <= 1e-12
    report(
        "C4 chain correctness",
        ok,
        f"fsum == 1 on 401 rates: {sums_exact}; miss risk non-increasing over 50 rates: {monotone}; "
        f"M=1 geometric error {geo:.1e} (<= 1e-12)",
    )


def test_c05_zero_rate_bound():
    model = build_model(baseline())
    a = solve(model)
    b = solve(model.with_rate_bound(rate_bound_cost(model.grid, 0.0, 1.0)))
    via_file = build_model(baseline().with_(rate_bound=0.0))
    c = solve(via_file)
    ok = (
        a.policy == b.policy == c.policy
        and np.array_equal(a.cost.J, b.cost.J)
        and np.array_equal(a.cost.J, c.cost.J)
        and np.array_equal(a.Q, b.Q)
    )
    report("C5 zero rate bound", ok, "policy, J and Q bit-identical with R0 = 0" if ok else "outputs differ")


def test_c06_mismatch():
    sc = baseline()
    same = mismatch_eval(sc, TrueModelOverride(sc.bandwidth))
    zero = not same.gap.any()
    rows = ratebound_sweep(sc, np.linspace(0.0, 200.0, 20), [TrueModelOverride(150.0), TrueModelOverride(50.0)])

    def rel_gaps(B):
        sel = [r for r in rows if r.B_true == B]
        return [r.utility_gap(sc.lambda_I) / (r.elastic_omniscient + sc.lambda_I * r.inelastic_omniscient) for r in sel]

    g150, g50 = rel_gaps(150.0), rel_gaps(50.0)
    ok = zero and len(g150) == 20 and min(g150) < 0.10 and min(g50) >= 0.10
    report(
        "C6 mismatch sanity",
        ok,
        f"identity gap all zero: {zero}; min relative gap B=150: {min(g150):.3f} (< 0.10); "
        f"B=50: {min(g50):.3f} (>= 0.10 everywhere)",
    )


def _stateful_doc(spec):
    return {
        "bandwidth": 200,
        "elastic": {"size": 240000, "deadline": 1800},
        "discretization": {"M": 100, "N": 100},
        "flows": [{"load": 2.5, "reward_rate": 25}, {"load": 75, "reward_rate": 25, "stateful": True}],
        "prune_dominated": True,
        "stateful": spec,
    }


def test_c07_stateful_degeneracy():
    sc = scenario_from_dict(_stateful_doc({"D_p": 1, "D_u": 0, "pi": [1.0], "gamma": [1.0]}))
    aug = build_model(sc)
    flat = assemble_model(sc, sc.grid, build_control(sc))
    diff = abs(solve(aug).cost.initial(aug) - solve(flat).cost.initial(flat))
    report("C7 stateful degeneracy", diff <= 1e-9, f"|J1(augmented) - J1(composite)| = {diff:.2e} (<= 1e-9)")


def test_c08_stateful_behavior():
    sc = load_scenario(SCENARIOS / "stateful_persistence.yaml")
    model = build_model(sc)
    table = solve(model).policy.table[:-1]
    W = model.M + 1
    i0 = model.initial_level
    differ = int((table[:, i0 * W : (i0 + 1) * W] != table[:, (i0 + 1) * W : (i0 + 2) * W]).sum())

    sc = load_scenario(SCENARIOS / "stateful_urgency.yaml")
    model = build_model(sc)
    mu = solve(model).policy
    paths = sample_paths(model, mu, 123, 1000)
    acts = mu.table[np.arange(model.N)[None, :], paths[:, :-1]] - 1
    admits = np.asarray(model.control.admits_stateful)[acts]
    ever = admits.any(axis=1)
    first = admits.argmax(axis=1)[ever]
    by4 = float(np.mean(first <= 4)) if ever.any() else 0.0
    ok = differ > 0 and ever.any() and by4 == 1.0
    report(
        "C8 stateful behavior",
        ok,
        f"persistence: w=0 and w=1 policies differ in {differ} cells; urgency: {int(ever.sum())}/1000 "
        f"trajectories admit, first admission at stage <= 4 in {100 * by4:.1f}% (latest {int(first.max())})",
    )


def test_c09_simulator():
    model = build_model(baseline())
    n = 10_000
    details, ok = [], True
    for a in (1, 26, 51):
        mu = constant_policy(model, a)
        st = batch_stats(model, mu, n, 900 + a)
        miss = chain.deadline_miss_risk(model.block(0)[a - 1], model.N)
        se_miss = math.sqrt(miss * (1 - miss) / n)
        J1 = -evaluate_policy(model, mu).initial(model)
        # a constant action earns a fixed inelastic reward, so the total is an
        # affine function of the completion indicator and shares its binomial SE
        se_r = se_miss * model.elastic_reward[-1]
        z_miss = abs(st.miss_rate - miss) / se_miss
        z_r = abs(st.mean_reward - J1) / se_r
        ok &= z_miss <= 3 and z_r <= 3
        details.append(f"a={a}: miss z={z_miss:.2f}, reward z={z_r:.2f}")
    report("C9 simulator agreement", ok, "; ".join(details) + " (all <= 3 SE, 10^4 runs each)")


def _snapshot(folder):
    return {p.name: p.read_bytes() for p in sorted(folder.iterdir())}


def test_c10_determinism(tmp_path):
    base = str(SCENARIOS / "baseline.yaml")
    commands = {
        "risk": ["risk", "--scenario", base, "--json"],
        "solve": ["solve", "--scenario", base, "--json"],
        "simulate": ["simulate", "--scenario", base, "--count", "1000", "--seed", "5", "--keep", "5", "--json"],
        "sweep-lambda": ["sweep-lambda", "--scenario", base, "--grid", "0.5,2", "--json"],
        "sweep-ratebound": [
            "sweep-ratebound", "--scenario", str(SCENARIOS / "option_a.yaml"),
            "--grid", "0,120", "--true-bandwidth", "150", "--json",
        ],
    }
    bad = []
    for name, argv in commands.items():
        snaps = []
        for rep in range(2):
            out = tmp_path / f"{name}_{rep}"
            if cli_run([*argv, "--out", str(out)]) != 0:
                bad.append(f"{name} exited non-zero")
            snaps.append(_snapshot(out))
        if snaps[0] != snaps[1] or not snaps[0]:
            bad.append(name)
    pol = tmp_path / "solve_0" / "policy.csv"
    snaps = []
    for rep in range(2):
        out = tmp_path / f"evaluate_{rep}"
        if cli_run(["evaluate", "--scenario", base, "--policy", str(pol), "--out", str(out)]) != 0:
            bad.append("evaluate exited non-zero")
        snaps.append(_snapshot(out))
    if snaps[0] != snaps[1]:
        bad.append("evaluate")
    report("C10 determinism", not bad, "6 subcommands byte-identical across reruns" if not bad else f"differs: {bad}")


if __name__ == "__main__":
    import tempfile

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
