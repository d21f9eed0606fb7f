"""Scenario description, state-space discretization and control-space construction.

A scenario fixes the link bandwidth ``B`` (Mbps), the elastic flow's size
``S`` (Mb) and deadline ``T`` (s), and a list of candidate inelastic flows.
The size-time square is cut into an ``(M+1) x (N+1)`` grid of step-stage
cells indexed by ``i = 1 + x + (M+1) k``; actions are nested subsets of the
inelastic flows ordered by non-decreasing load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml

from .errors import CalibrationError, DomainError, ValidationError

__all__ = [
    "ElasticReward",
    "InelasticFlowSpec",
    "LinkScenario",
    "Discretization",
    "ControlSpace",
    "build_control_space",
    "calibrate_rewards",
    "elastic_reward_at",
    "locate_state",
    "load_scenario",
    "scenario_from_dict",
]


@dataclass(frozen=True)
class ElasticReward:
    """Time-dependent one-time completion reward ``V^E(t)``.

    ``breakpoints`` is a tuple of ``(t_end, value)`` pairs; ``value`` applies
    on ``(t_prev_end, t_end]`` (the first piece starts at 0). An empty tuple
    means the constant ``value``. The reward is zero beyond the deadline.
    """

    value: float = 1.0
    breakpoints: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.breakpoints:
            ends = [t for t, _ in self.breakpoints]
            if any(b <= a for a, b in zip(ends, ends[1:])):
                raise ValidationError("reward breakpoints must be strictly increasing in time")
            if any(v <= 0 for _, v in self.breakpoints):
                raise ValidationError("elastic reward must be strictly positive before the deadline")
        elif not self.value > 0:
            raise ValidationError("elastic reward must be strictly positive before the deadline")

    def __call__(self, t: float, T: float) -> float:
        if t > T:
            return 0.0
        if not self.breakpoints:
            return float(self.value)
        for t_end, v in self.breakpoints:
            if t <= t_end:
                return float(v)
        raise ValidationError(f"reward table ends at {self.breakpoints[-1][0]} before t={t}")


@dataclass(frozen=True)
class InelasticFlowSpec:
    load: float
    reward_rate: float
    stateful: bool = False

    def __post_init__(self):
        if not (self.load >= 0 and math.isfinite(self.load)):
            raise ValidationError(f"flow load must be a finite value >= 0, got {self.load}")
        if not (self.reward_rate >= 0 and math.isfinite(self.reward_rate)):
            raise ValidationError(f"flow reward rate must be a finite value >= 0, got {self.reward_rate}")


@dataclass(frozen=True)
class Discretization:
    """The step-stage grid over ``[0, S] x [0, T]``."""

    steps: int
    stages: int
    size: float
    deadline: float

    def __post_init__(self):
        if not (1 <= self.steps <= self.stages):
            raise ValidationError(f"need 1 <= M <= N, got M={self.steps}, N={self.stages}")
        if not (self.size > 0 and self.deadline > 0):
            raise ValidationError("size and deadline must be positive")

    @property
    def M(self) -> int:
        return self.steps

    @property
    def N(self) -> int:
        return self.stages

    @property
    def delta_S(self) -> float:
        return self.size / self.steps

    @property
    def delta_T(self) -> float:
        return self.deadline / self.stages

    @property
    def n(self) -> int:
        return (self.steps + 1) * (self.stages + 1)

    def index(self, x: int, k: int) -> int:
        """1-based state index of cell ``(x, k)``."""
        if not (0 <= x <= self.M and 0 <= k <= self.N):
            raise DomainError(f"cell ({x}, {k}) outside the grid")
        return 1 + x + (self.M + 1) * k

    def cell(self, i: int) -> tuple[int, int]:
        if not (1 <= i <= self.n):
            raise DomainError(f"state index {i} outside 1..{self.n}")
        k, x = divmod(i - 1, self.M + 1)
        return x, k

    def remaining(self, x):
        """Remaining size at the upper edge of step ``x`` (0 at completion)."""
        x = np.asarray(x)
        s = self.size - self.size * x / self.steps
        return np.where(x >= self.M, 0.0, s)

    def stage_time(self, k):
        """Start time ``T k / N`` of stage ``k``, pinned to exactly ``T`` at ``k = N``."""
        k = np.asarray(k)
        return np.where(k >= self.stages, self.deadline, self.deadline * k / self.stages)


def locate_state(d: Discretization, s: float, t: float) -> int:
    """Map a continuous status ``(s, t)`` to its 1-based cell index.

    Boundaries follow the half-open convention exactly, with no tolerance:
    step ``x < M`` holds ``s`` in ``(S-(x+1)dS, S-x dS]``, stage ``k < N``
    holds ``t`` in ``[k dT, (k+1) dT)``. Edges are evaluated as ``S - S x/M``
    and ``T k/N``, the same expressions used everywhere else.
    """
    S, T, M, N = d.size, d.deadline, d.M, d.N
    if not (0 <= s <= S):
        raise DomainError(f"remaining size {s} outside [0, {S}]")
    if not (0 <= t <= T):
        raise DomainError(f"elapsed time {t} outside [0, {T}]")
    def edge(x):
        return S - S * x / M

    def start(k):
        return T * k / N

    if s == 0:
        x = M
    else:
        x = min(max(int(math.floor((S - s) / d.delta_S)), 0), M - 1)
        while x > 0 and s > edge(x):
            x -= 1
        while x < M - 1 and not s > edge(x + 1):
            x += 1

    if t == T:
        k = N
    else:
        k = min(max(int(math.floor(t / d.delta_T)), 0), N - 1)
        while k > 0 and t < start(k):
            k -= 1
        while k < N - 1 and t >= start(k + 1):
            k += 1
    return 1 + x + (M + 1) * k


@dataclass(frozen=True, eq=False)
class ControlSpace:
    """Ordered actions; index 0 here is action 1 (the empty set).

    ``stateful_reward`` and ``admits_stateful`` are only set for composite
    spaces built with a stateful flow set; ``stateful_reward[a]`` is the part
    of ``rewards[a]`` contributed by that set.
    """

    bandwidth: float
    loads: np.ndarray
    rewards: np.ndarray
    members: tuple[tuple[int, ...], ...]
    calibrated: bool = False
    admits_stateful: tuple[bool, ...] | None = None
    stateful_reward: np.ndarray | None = None

    @property
    def m(self) -> int:
        return len(self.loads)

    @property
    def rates(self) -> np.ndarray:
        return np.maximum(0.0, self.bandwidth - self.loads)

    def check_ordering(self) -> None:
        L, V = self.loads, self.rewards
        if self.m == 0 or L[0] != 0 or V[0] != 0:
            raise ValidationError("action 1 must be the empty set")
        if np.any(np.diff(L) < 0):
            raise ValidationError("action loads must be non-decreasing")
        if np.any(L > self.bandwidth):
            raise ValidationError("nominal action loads may not exceed the bandwidth")


def _ratio_key(idx: int, flow: InelasticFlowSpec):
    if flow.load == 0 and flow.reward_rate > 0:
        # infinite reward per unit load: ordered ahead of everything else
        return (0, Fraction(0), Fraction(0), idx)
    ratio = Fraction(0) if flow.load == 0 else Fraction(flow.reward_rate) / Fraction(flow.load)
    return (1, -ratio, Fraction(flow.load), idx)


def build_control_space(
    flows: Sequence[InelasticFlowSpec],
    bandwidth: float,
    allow_overload: bool = False,
    indices: Sequence[int] | None = None,
) -> ControlSpace:
    """Nested-subset control space: action ``a`` admits the ``a-1`` best flows.

    Flows are ranked by reward per unit load (ties: smaller load, then input
    order) and aggregated additively. Rewards are left uncalibrated.
    ``indices`` optionally labels the flows with their positions in a larger
    list so that ``members`` refers back to the scenario.
    """
    if not bandwidth > 0:
        raise ValidationError("bandwidth must be positive")
    flows = list(flows)
    labels = list(indices) if indices is not None else list(range(len(flows)))
    order = sorted(range(len(flows)), key=lambda j: _ratio_key(j, flows[j]))
    loads = [0.0]
    rewards = [0.0]
    members = [()]
    for j in order:
        loads.append(loads[-1] + flows[j].load)
        rewards.append(rewards[-1] + flows[j].reward_rate)
        members.append(members[-1] + (labels[j],))
    loads_arr = np.array(loads)
    if not allow_overload and loads_arr[-1] > bandwidth:
        raise ValidationError(
            f"total inelastic load {loads_arr[-1]} exceeds bandwidth {bandwidth}; "
            "nominal control spaces may not congest the link"
        )
    return ControlSpace(bandwidth, loads_arr, np.array(rewards), tuple(members))


def calibrate_rewards(cs: ControlSpace, elastic_reward: ElasticReward, T: float) -> ControlSpace:
    """Rescale reward rates so that the last action earns ``V^E(T)/T``."""
    target_total = elastic_reward(T, T)
    if not target_total > 0:
        raise CalibrationError("elastic reward at the deadline must be positive")
    raw = cs.rewards
    if cs.m < 2 or not raw[-1] > 0:
        raise CalibrationError("calibration needs an action with positive reward rate")
    target = target_total / T
    scale = target / raw[-1]
    scaled = raw * scale
    scaled[-1] = target
    sr = None if cs.stateful_reward is None else cs.stateful_reward * scale
    return replace(cs, rewards=scaled, calibrated=True, stateful_reward=sr)


def elastic_reward_at(
    spec: ElasticReward,
    soft_deadline: tuple[float, float] | None,
    t: float,
    T: float,
) -> float:
    """Completion reward at time ``t``, boosted by ``1+beta`` up to ``(1-alpha) T``."""
    if t > T:
        return 0.0
    base = spec(t, T)
    if soft_deadline is not None:
        alpha, beta = soft_deadline
        if 0 < t <= (1 - alpha) * T:
            return (1 + beta) * base
    return base


@dataclass(frozen=True)
class LinkScenario:
    bandwidth: float
    size: float
    deadline: float
    flows: tuple[InelasticFlowSpec, ...] = ()
    steps: int = 100
    stages: int = 100
    lambda_I: float = 1.0
    soft_deadline: tuple[float, float] | None = None
    rate_bound: float = 0.0
    elastic_reward: ElasticReward = field(default_factory=ElasticReward)
    stateful: Any = None  # stateful.InelasticStateSpec
    prune_dominated: bool = False

    def __post_init__(self):
        for name in ("bandwidth", "size", "deadline"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValidationError(f"{name} must be positive, got {v}")
        if not self.lambda_I >= 0:
            raise ValidationError("lambda_I must be >= 0")
        if not self.rate_bound >= 0:
            raise ValidationError("rate_bound_R0 must be >= 0")
        if self.soft_deadline is not None:
            alpha, beta = self.soft_deadline
            if not (0 < alpha < 1 and beta > 0):
                raise ValidationError("soft deadline needs alpha in (0,1) and beta > 0")
        has_stateful = any(f.stateful for f in self.flows)
        if has_stateful and self.stateful is None:
            raise ValidationError("flows marked stateful need a 'stateful' section")
        if self.stateful is not None and not has_stateful:
            raise ValidationError("'stateful' section given but no flow is marked stateful")
        self.grid  # validates M, N

    @property
    def grid(self) -> Discretization:
        return Discretization(self.steps, self.stages, self.size, self.deadline)

    def reward_at(self, t: float) -> float:
        return elastic_reward_at(self.elastic_reward, self.soft_deadline, t, self.deadline)

    def with_(self, **changes) -> "LinkScenario":
        return replace(self, **changes)


def _flows_from(items: Iterable[Mapping[str, Any]]) -> tuple[InelasticFlowSpec, ...]:
    flows = []
    for item in items:
        count = int(item.get("count", 1))
        if count < 0:
            raise ValidationError("flow count must be >= 0")
        spec = InelasticFlowSpec(
            float(item["load"]), float(item["reward_rate"]), bool(item.get("stateful", False))
        )
        flows.extend([spec] * count)
    return tuple(flows)


def _reward_from(raw: Any) -> ElasticReward:
    if raw is None:
        return ElasticReward()
    if isinstance(raw, (int, float)):
        return ElasticReward(float(raw))
    if isinstance(raw, Mapping) and "constant" in raw:
        return ElasticReward(float(raw["constant"]))
    table = raw["table"] if isinstance(raw, Mapping) else raw
    return ElasticReward(breakpoints=tuple((float(t), float(v)) for t, v in table))


def scenario_from_dict(doc: Mapping[str, Any]) -> LinkScenario:
    """Build a scenario from a parsed scenario document."""
    try:
        elastic = doc["elastic"]
        disc = doc.get("discretization", {})
        soft = doc.get("soft_deadline")
        stateful = None
        if doc.get("stateful") is not None:
            from .stateful import InelasticStateSpec

            stateful = InelasticStateSpec.from_dict(doc["stateful"])
        return LinkScenario(
            bandwidth=float(doc["bandwidth"]),
            size=float(elastic["size"]),
            deadline=float(elastic["deadline"]),
            flows=_flows_from(doc.get("flows", [])),
            steps=int(disc.get("M", 100)),
            stages=int(disc.get("N", 100)),
            lambda_I=float(doc.get("lambda_I", 1.0)),
            soft_deadline=None if soft is None else (float(soft["alpha"]), float(soft["beta"])),
            rate_bound=float(doc.get("rate_bound_R0", 0.0)),
            elastic_reward=_reward_from(elastic.get("reward")),
            stateful=stateful,
            prune_dominated=bool(doc.get("prune_dominated", False)),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed scenario document: {exc!r}") from exc


def load_scenario(path: str | Path) -> LinkScenario:
    """Read a YAML (or JSON) scenario file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read scenario {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"cannot parse scenario {path}: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ValidationError(f"scenario {path} is not a key-value document")
    return scenario_from_dict(doc)
