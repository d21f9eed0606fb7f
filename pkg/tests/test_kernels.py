from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from admctl import _kernels
from admctl.pipeline import build_model
from admctl.sim import sample_paths
from admctl.ssp import Policy, decompose_cost, solve

from conftest import small_scenario

py = _kernels.get("python")
needs_cython = pytest.mark.skipif("cython" not in _kernels.available(), reason="extension not built")


def test_active_backend_is_listed():
    assert _kernels.BACKEND in _kernels.available()


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.get("fortran")


def test_uniform_stream_shape():
    u = py.uniforms(7, np.arange(1000), 3)
    assert u.shape == (1000,)
    assert np.all((u >= 0) & (u < 1))
    assert abs(u.mean() - 0.5) < 0.05
    assert not np.array_equal(u, py.uniforms(8, np.arange(1000), 3))
    assert not np.array_equal(u, py.uniforms(7, np.arange(1000), 4))


@pytest.mark.parametrize("choice", ["python", "auto"])
def test_env_override(choice):
    env = dict(os.environ, ADMCTL_KERNEL=choice)
    out = subprocess.run(
        [sys.executable, "-c", "from admctl import _kernels; print(_kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    ).stdout.strip()
    assert out == ("python" if choice == "python" else _kernels.BACKEND)


@needs_cython
class TestBackendsAgree:
    cy = _kernels.get("cython") if "cython" in _kernels.available() else None

    def test_uniforms(self):
        t = np.arange(0, 2**40, 2**30, dtype=np.uint64)
        for seed in (0, 1, 2**63 + 5):
            assert np.array_equal(py.uniforms(seed, t, 11), self.cy.uniforms(seed, t, 11))

    def test_random_models(self):
        rng = np.random.default_rng(44)
        for t in range(15):
            model = build_model(small_scenario(rng, max_M=12, max_N=14, max_flows=4, rate_bound=bool(t % 3 == 0)))
            a, b = solve(model, py), solve(model, self.cy)
            np.testing.assert_allclose(a.cost.J, b.cost.J, atol=1e-13, rtol=0)
            np.testing.assert_allclose(a.Q, b.Q, atol=1e-13, rtol=0)
            assert a.policy == b.policy
            pa = decompose_cost(model, a.policy, py)
            pb = decompose_cost(model, a.policy, self.cy)
            for u, v in ((pa.J_E, pb.J_E), (pa.J_I, pb.J_I), (pa.J_0, pb.J_0)):
                np.testing.assert_allclose(u, v, atol=1e-13, rtol=0)

    def test_shipped_scenarios(self, scenario_dir):
        from admctl.scenario import load_scenario

        for name in ("baseline", "ratebound", "stateful_urgency"):
            model = build_model(load_scenario(scenario_dir / f"{name}.yaml"))
            a, b = solve(model, py), solve(model, self.cy)
            assert a.policy == b.policy
            np.testing.assert_allclose(a.cost.J, b.cost.J, atol=1e-13, rtol=0)

    def test_identical_paths(self, baseline_model, baseline_solution):
        mu = baseline_solution.policy
        a = sample_paths(baseline_model, mu, 99, 400, 0, py)
        b = sample_paths(baseline_model, mu, 99, 400, 0, self.cy)
        assert np.array_equal(a, b)

    def test_identical_paths_random_policy(self):
        rng = np.random.default_rng(8)
        model = build_model(small_scenario(rng, max_M=10, max_N=12, max_flows=3))
        table = rng.integers(1, model.m + 1, size=(model.N + 1, model.width)).astype(np.int32)
        mu = Policy(table)
        assert np.array_equal(
            sample_paths(model, mu, 3, 500, 17, py), sample_paths(model, mu, 3, 500, 17, self.cy)
        )
