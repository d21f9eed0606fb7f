"""Seeded Monte Carlo simulation of the controlled step-stage process.

Trajectory ``j`` of a run with seed ``s`` draws its stage-``k`` uniform from
a counter-based generator keyed by ``(s, j, k)``, so any trajectory can be
regenerated alone and batches split across workers reproduce exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ValidationError
from .ssp import Policy, SspModel, _check_policy

__all__ = ["Trajectory", "BatchStats", "sample_paths", "sample_trajectory", "batch_stats"]

_Z95 = 1.959963984540054


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One realized path; arrays are indexed by stage ``k = 0..N``.

    ``action``, ``rate`` and the reward columns describe the transition out
    of stage ``k`` and are 0 on the final row.
    """

    k: np.ndarray
    t: np.ndarray
    x: np.ndarray
    w: np.ndarray
    s: np.ndarray
    action: np.ndarray
    rate: np.ndarray
    elastic_reward: np.ndarray
    inelastic_reward: np.ndarray
    penalty: np.ndarray
    stage_reward: np.ndarray
    cumulative_reward: np.ndarray
    done: np.ndarray

    columns = ("k", "t", "x", "w", "s", "action", "R", "stage_reward", "cumulative_reward", "done")

    @property
    def completed(self) -> bool:
        return bool(self.done[-1])

    @property
    def total_reward(self) -> float:
        return float(self.cumulative_reward[-1])

    def rows(self):
        for j in range(len(self.k)):
            yield (
                int(self.k[j]),
                float(self.t[j]),
                int(self.x[j]),
                int(self.w[j]),
                float(self.s[j]),
                int(self.action[j]),
                float(self.rate[j]),
                float(self.stage_reward[j]),
                float(self.cumulative_reward[j]),
                int(self.done[j]),
            )


def sample_paths(model: SspModel, mu: Policy, seed: int, count: int, first: int = 0, backend=None) -> np.ndarray:
    """Row paths ``(count, N+1)`` for trajectories ``first .. first+count-1``."""
    _check_policy(model, mu)
    if count < 1:
        raise ValidationError("count must be >= 1")
    k = backend or _kernels
    return k.simulate(model.trans, mu.kernel_table(), model.start_row, int(seed) % 2**64, int(first), int(count))


def _rewards(model: SspModel, mu: Policy, paths: np.ndarray):
    N = model.N
    src = paths[:, :-1]
    dst = paths[:, 1:]
    stages = np.arange(N)[None, :]
    acts = mu.table[stages, src] - 1
    open_ = model.row_open[src]
    elastic = np.where(open_ & model.col_done[dst], model.elastic_reward[stages], 0.0)
    inelastic = -model.inelastic_cost[acts, src]
    penalty = np.where(open_, model.ratebound_dest()[stages, dst], 0.0)
    return acts + 1, elastic, inelastic, penalty


def sample_trajectory(model: SspModel, mu: Policy, seed: int, index: int = 0, backend=None) -> Trajectory:
    """Trajectory number ``index`` of the stream keyed by ``seed``."""
    path = sample_paths(model, mu, seed, 1, index, backend)
    acts, el, inel, pen = _rewards(model, mu, path)
    M1 = model.M + 1
    N = model.N
    rows = path[0]
    level, x = np.divmod(rows, M1)
    stage_reward = np.zeros(N + 1)
    stage_reward[:N] = el[0] + model.lambda_I * inel[0] - pen[0]

    def pad(v, dtype=float):
        out = np.zeros(N + 1, dtype=dtype)
        out[:N] = v
        return out

    action = pad(acts[0], int)
    rates = model.rates if model.rates is not None else np.zeros(model.m)
    rate = pad(rates[acts[0] - 1])
    w = level - model.initial_level if model.levels > 1 else np.zeros_like(level)
    return Trajectory(
        k=np.arange(N + 1),
        t=model.grid.stage_time(np.arange(N + 1)),
        x=x,
        w=w,
        s=model.grid.remaining(x),
        action=action,
        rate=rate,
        elastic_reward=pad(el[0]),
        inelastic_reward=pad(inel[0]),
        penalty=pad(pen[0]),
        stage_reward=stage_reward,
        cumulative_reward=np.concatenate([[0.0], np.cumsum(stage_reward[:N])]),
        done=(x == model.M).astype(int),
    )


@dataclass(frozen=True)
class BatchStats:
    count: int
    miss_rate: float
    miss_half_width: float
    mean_reward: float
    reward_half_width: float
    mean_elastic: float
    elastic_half_width: float
    mean_inelastic: float
    inelastic_half_width: float
    mean_penalty: float
    penalty_half_width: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _mean_hw(v: np.ndarray) -> tuple[float, float]:
    n = len(v)
    mean = float(v.mean())
    if n < 2:
        return mean, math.nan
    return mean, float(_Z95 * v.std(ddof=1) / math.sqrt(n))


def batch_stats(model: SspModel, mu: Policy, count: int, seed: int, backend=None) -> BatchStats:
    """Empirical miss rate and mean rewards with 95% normal half-widths.

    The miss-rate half-width is the binomial normal approximation.
    """
    paths = sample_paths(model, mu, seed, count, 0, backend)
    _, el, inel, pen = _rewards(model, mu, paths)
    final_x = paths[:, -1] % (model.M + 1)
    missed = (final_x != model.M).astype(float)
    p = float(missed.mean())
    miss_hw = _Z95 * math.sqrt(p * (1 - p) / count) if count > 1 else math.nan
    e = el.sum(axis=1)
    i = inel.sum(axis=1)
    z = pen.sum(axis=1)
    total = e + model.lambda_I * i - z
    mr, hr = _mean_hw(total)
    me, he = _mean_hw(e)
    mi, hi = _mean_hw(i)
    mz, hz = _mean_hw(z)
    return BatchStats(count, p, miss_hw, mr, hr, me, he, mi, hi, mz, hz)
