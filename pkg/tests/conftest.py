from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

from admctl.pipeline import build_model
from admctl.scenario import InelasticFlowSpec, LinkScenario, load_scenario
from admctl.ssp import solve

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return SCENARIOS


@pytest.fixture(scope="session")
def baseline() -> LinkScenario:
    return load_scenario(SCENARIOS / "baseline.yaml")


@pytest.fixture(scope="session")
def baseline_model(baseline):
    return build_model(baseline)


@pytest.fixture(scope="session")
def baseline_solution(baseline_model):
    return solve(baseline_model)


def small_scenario(rng: np.random.Generator, max_M=6, max_N=6, max_flows=2, rate_bound=False) -> LinkScenario:
    """A random small stateless scenario with a feasible nominal control space."""
    M = int(rng.integers(1, max_M + 1))
    N = int(rng.integers(M, max(M, max_N) + 1))
    B = float(rng.uniform(5, 50))
    nflows = int(rng.integers(1, max_flows + 1))
    budget = B * rng.uniform(0.2, 0.95)
    loads = rng.dirichlet(np.ones(nflows)) * budget
    flows = tuple(
        InelasticFlowSpec(float(L), float(rng.uniform(0.1, 5.0))) for L in loads
    )
    size = float(B * rng.uniform(10, 100))
    deadline = float(size / B * rng.uniform(0.8, 3.0))
    return LinkScenario(
        bandwidth=B,
        size=size,
        deadline=deadline,
        flows=flows,
        steps=M,
        stages=N,
        lambda_I=float(rng.choice([0.0, 0.5, 1.0, 3.0])),
        rate_bound=float(rng.uniform(0, B)) if rate_bound else 0.0,
    )


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
