"""Congestion, the desired-minimum-rate penalty and nominal-vs-true mismatch.

The nominal model is what the controller is optimized against; a true model
shares its structure (grid and action list) but may differ in bandwidth and
per-flow loads. Actions whose true load exceeds the true bandwidth congest
the link: no elastic progress and no inelastic reward.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .scenario import ControlSpace, Discretization, LinkScenario
from .ssp import CostVector, Policy, SspModel, decompose_cost, solve

__all__ = [
    "TrueModelOverride",
    "effective_action_params",
    "rate_bound_cost",
    "true_control_space",
    "MismatchReport",
    "mismatch_eval",
    "mismatch_between",
    "RateBoundRow",
    "ratebound_sweep",
]


@dataclass(frozen=True)
class TrueModelOverride:
    """True link conditions; ``loads`` (if given) replaces every flow's load."""

    bandwidth: float
    loads: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.bandwidth >= 0:
            raise ValidationError("true bandwidth must be >= 0")
        if self.loads is not None and any(not l >= 0 for l in self.loads):
            raise ValidationError("true loads must be >= 0")


def effective_action_params(B_true: float, load: float, vi_nominal: float) -> tuple[float, float]:
    """Elastic rate and reward rate of an action under true bandwidth ``B_true``."""
    if B_true < 0 or load < 0 or vi_nominal < 0:
        raise ValidationError("inputs must be non-negative")
    rate = max(0.0, B_true - load)
    return rate, (vi_nominal if load <= B_true else 0.0)


def rate_bound_cost(d: Discretization, R0: float, VE_T: float, T: float | None = None) -> np.ndarray:
    """Destination costs ``(N, M+1)`` penalizing arrival behind the ``R0`` line.

    Arriving at step ``x'`` at the end of stage ``k`` costs ``(VE_T/T) dT``
    when the remaining size ``S - x' dS`` strictly exceeds ``S - R0 (k+1) dT``.
    Arrival at completion is never penalized.
    """
    if not R0 >= 0:
        raise ValidationError("R0 must be >= 0")
    T = d.deadline if T is None else T
    N, M = d.N, d.M
    out = np.zeros((N, M + 1))
    if R0 == 0:
        return out
    c = VE_T / T * d.delta_T
    s = d.remaining(np.arange(M + 1))
    t = d.stage_time(np.arange(N) + 1)
    line = d.size - R0 * t
    out[s[None, :] > line[:, None]] = c
    out[:, M] = 0.0  # completion is never behind the line, even once it has crossed s = 0
    return out


def true_control_space(nominal: ControlSpace, flow_loads: Sequence[float], override: TrueModelOverride) -> ControlSpace:
    """Same actions as ``nominal`` with true loads, rates and congestion-zeroed rewards."""
    loads = list(flow_loads) if override.loads is None else list(override.loads)
    if len(loads) != len(flow_loads):
        raise ValidationError(
            f"structural mismatch: {len(loads)} true loads for {len(flow_loads)} flows"
        )
    L = np.array([float(sum(loads[j] for j in mem)) for mem in nominal.members])
    B = override.bandwidth
    V = np.array([effective_action_params(B, l, v)[1] for l, v in zip(L, nominal.rewards)])
    sr = None
    if nominal.stateful_reward is not None:
        sr = np.where(L <= B, nominal.stateful_reward, 0.0)
    # a zero bandwidth keeps the same structure; rates clamp at 0
    return replace(nominal, bandwidth=B, loads=L, rewards=V, stateful_reward=sr)


@dataclass(frozen=True, eq=False)
class MismatchReport:
    """Cost gap of the nominal policy against the omniscient one, on the true model."""

    gap: np.ndarray
    gap_elastic: np.ndarray
    gap_inelastic: np.ndarray
    nominal_policy: Policy = field(repr=False)
    omniscient_policy: Policy = field(repr=False)
    nominal_cost: CostVector = field(repr=False)
    omniscient_cost: CostVector = field(repr=False)
    start_row: int = 0

    def _util(self, cost, part):
        return -float(getattr(cost, part)[0, self.start_row])

    @property
    def nominal_utilities(self) -> tuple[float, float]:
        return self._util(self.nominal_cost, "J_E"), self._util(self.nominal_cost, "J_I")

    @property
    def omniscient_utilities(self) -> tuple[float, float]:
        return self._util(self.omniscient_cost, "J_E"), self._util(self.omniscient_cost, "J_I")

    @property
    def nominal_utility(self) -> float:
        return self._util(self.nominal_cost, "J")

    @property
    def omniscient_utility(self) -> float:
        return self._util(self.omniscient_cost, "J")

    @property
    def utility_gap(self) -> float:
        return float(self.gap[0, self.start_row])


def _same_structure(a: SspModel, b: SspModel) -> None:
    if a.trans.shape != b.trans.shape or a.grid != b.grid or a.levels != b.levels:
        raise ValidationError("structural mismatch between nominal and true models")


def mismatch_between(nominal: SspModel, true: SspModel, nominal_policy: Policy | None = None) -> MismatchReport:
    """Evaluate the nominal-optimal policy and the true-optimal policy on ``true``."""
    _same_structure(nominal, true)
    mu_bar = nominal_policy if nominal_policy is not None else solve(nominal).policy
    mu_star = solve(true).policy
    cb = decompose_cost(true, mu_bar)
    cs = decompose_cost(true, mu_star)
    return MismatchReport(
        gap=cb.J - cs.J,
        gap_elastic=cb.J_E - cs.J_E,
        gap_inelastic=true.lambda_I * (cb.J_I - cs.J_I),
        nominal_policy=mu_bar,
        omniscient_policy=mu_star,
        nominal_cost=cb,
        omniscient_cost=cs,
        start_row=true.start_row,
    )


def mismatch_eval(scenario: LinkScenario, override: TrueModelOverride, nominal_model: SspModel | None = None) -> MismatchReport:
    """Mismatch report for ``scenario`` (nominal, including its rate bound) under ``override``.

    The true model is judged on the plain elastic/inelastic objective, so
    the rate-bound penalty only shapes the nominal policy.
    """
    from .pipeline import build_model

    nominal = nominal_model if nominal_model is not None else build_model(scenario)
    true = build_model(scenario.with_(rate_bound=0.0), override=override)
    return mismatch_between(nominal, true)


@dataclass(frozen=True)
class RateBoundRow:
    R0: float
    B_true: float
    elastic_nominal_policy: float
    inelastic_nominal_policy: float
    elastic_omniscient: float
    inelastic_omniscient: float

    columns = (
        "R0",
        "B_true",
        "elastic_utility_nominal_policy",
        "inelastic_utility_nominal_policy",
        "elastic_utility_omniscient",
        "inelastic_utility_omniscient",
    )

    def values(self):
        return (
            self.R0,
            self.B_true,
            self.elastic_nominal_policy,
            self.inelastic_nominal_policy,
            self.elastic_omniscient,
            self.inelastic_omniscient,
        )

    def utility_gap(self, lambda_I: float = 1.0) -> float:
        omni = self.elastic_omniscient + lambda_I * self.inelastic_omniscient
        nom = self.elastic_nominal_policy + lambda_I * self.inelastic_nominal_policy
        return omni - nom


def ratebound_sweep(
    scenario: LinkScenario,
    grid: Sequence[float],
    overrides: Sequence[TrueModelOverride] = (),
) -> list[RateBoundRow]:
    """Solve the nominal model for each ``R0`` and evaluate under each true override.

    Nominal conditions (the scenario's own bandwidth and loads) are always
    reported first for every ``R0``.
    """
    from .pipeline import build_model

    values = sorted(float(v) for v in grid)
    if not values:
        raise ValidationError("R0 grid must be non-empty")
    conditions = [TrueModelOverride(scenario.bandwidth)] + list(overrides)
    base = build_model(scenario.with_(rate_bound=0.0))
    trues = [base] + [build_model(scenario.with_(rate_bound=0.0), override=o) for o in overrides]
    omni = []
    for t in trues:
        parts = decompose_cost(t, solve(t).policy)
        r = t.start_row
        omni.append((-float(parts.J_E[0, r]), -float(parts.J_I[0, r])))
    VE_T = scenario.reward_at(scenario.deadline)
    rows = []
    for R0 in values:
        rb = rate_bound_cost(scenario.grid, R0, VE_T, scenario.deadline)
        nominal = base.with_rate_bound(_tile_levels(rb, base.levels))
        mu = solve(nominal).policy
        for cond, t, (oe, oi) in zip(conditions, trues, omni):
            parts = decompose_cost(t, mu)
            r = t.start_row
            rows.append(
                RateBoundRow(R0, cond.bandwidth, -float(parts.J_E[0, r]), -float(parts.J_I[0, r]), oe, oi)
            )
    return rows


def _tile_levels(cost: np.ndarray, levels: int) -> np.ndarray:
    return np.tile(cost, (1, levels)) if levels > 1 else cost
