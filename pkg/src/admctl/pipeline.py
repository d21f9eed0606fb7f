"""From a scenario to a ready-to-solve model."""

from __future__ import annotations

from .robustness import TrueModelOverride, rate_bound_cost, true_control_space
from .scenario import ControlSpace, LinkScenario, build_control_space, calibrate_rewards
from .ssp import SspModel, assemble_model
from .stateful import augment_model, build_composite_control_space, build_level_chain

__all__ = ["build_control", "build_model"]


def build_control(scenario: LinkScenario) -> ControlSpace:
    """Calibrated nominal control space (composite when a stateful set exists)."""
    flows = scenario.flows
    plain = [j for j, f in enumerate(flows) if not f.stateful]
    sticky = [j for j, f in enumerate(flows) if f.stateful]
    if not sticky:
        cs = build_control_space([flows[j] for j in plain], scenario.bandwidth, indices=plain)
    else:
        base = build_control_space(
            [flows[j] for j in plain], scenario.bandwidth, allow_overload=True, indices=plain
        )
        cs = build_composite_control_space(
            base,
            sum(flows[j].load for j in sticky),
            sum(flows[j].reward_rate for j in sticky),
            sticky,
            prune_dominated=scenario.prune_dominated,
        )
        cs.check_ordering()
    return calibrate_rewards(cs, scenario.elastic_reward, scenario.deadline)


def build_model(scenario: LinkScenario, override: TrueModelOverride | None = None, max_bytes: int | None = None) -> SspModel:
    """Assemble the full model, including rate-bound costs and level augmentation.

    With ``override`` the nominal action list is kept but loads, rates and
    rewards follow the true bandwidth/loads (congestion rules apply).
    """
    grid = scenario.grid
    control = build_control(scenario)
    if override is not None:
        control = true_control_space(control, [f.load for f in scenario.flows], override)
    model = assemble_model(scenario, grid, control)
    if scenario.rate_bound > 0:
        VE_T = scenario.reward_at(scenario.deadline)
        model = model.with_rate_bound(rate_bound_cost(grid, scenario.rate_bound, VE_T, scenario.deadline))
    if scenario.stateful is not None:
        chain = build_level_chain(scenario.stateful, grid.delta_T)
        model = augment_model(model, chain, control, max_bytes=max_bytes)
    return model

