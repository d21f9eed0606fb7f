"""Time the numpy and compiled kernels on a scenario.

    python benchmarks/bench_kernels.py [--scenario scenarios/baseline.yaml] [--repeat 5] [--paths 10000]

Reports the best wall time of each backend for the optimal backward pass,
a fixed-policy evaluation and a batch of sampled trajectories, and checks
that both backends agree before timing anything.
"""

from __future__ import annotations

import argparse
import timeit
from pathlib import Path

import numpy as np

from admctl import _kernels
from admctl.pipeline import build_model
from admctl.scenario import load_scenario
from admctl.sim import sample_paths
from admctl.ssp import evaluate_policy, solve

ROOT = Path(__file__).resolve().parent.parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", type=Path, default=ROOT / "scenarios" / "baseline.yaml")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--paths", type=int, default=10_000)
    args = ap.parse_args(argv)

    model = build_model(load_scenario(args.scenario))
    backends = {name: _kernels.get(name) for name in _kernels.available()}
    mu = solve(model).policy

    ref = solve(model, backends["python"])
    for name, k in backends.items():
        sol = solve(model, k)
        assert sol.policy == ref.policy, f"{name} policy differs"
        assert np.allclose(sol.cost.J, ref.cost.J, atol=1e-12, rtol=0), f"{name} values differ"
        assert np.array_equal(sample_paths(model, mu, 1, 200, 0, k), sample_paths(model, mu, 1, 200, 0, backends["python"]))

    jobs = {
        "solve": lambda k: solve(model, k),
        "evaluate": lambda k: evaluate_policy(model, mu, k),
        f"simulate x{args.paths}": lambda k: sample_paths(model, mu, 0, args.paths, 0, k),
    }
    print(f"scenario {args.scenario.name}: n={model.n}, m={model.m}, N={model.N}")
    print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + (f"{'speedup':>10}" if len(backends) > 1 else ""))
    for label, job in jobs.items():
        times = {b: min(timeit.repeat(lambda: job(k), number=1, repeat=args.repeat)) for b, k in backends.items()}
        row = f"{label:<18}" + "".join(f"{times[b]:>11.4f}s" for b in backends)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
