"""Levels for stateful inelastic traffic (persistence and urgency requirements).

Levels run ``w = -D_u, ..., 0, 1, ..., D_p, D_p+1``: non-positive levels
count down the opportunity for a first admission, level 1 is freshest
admission, ``2..D_p`` are staler, and ``D_p+1`` is permanent suspension. In
storage level ``w`` sits at position ``w + D_u``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .chain import custom_step_probs, poisson_step_probs
from .errors import CapacityError, ValidationError
from .scenario import ControlSpace
from .ssp import SspModel

__all__ = [
    "InelasticStateSpec",
    "LevelChain",
    "build_level_chain",
    "build_composite_control_space",
    "augment_model",
    "DEFAULT_MAX_MODEL_BYTES",
]

DEFAULT_MAX_MODEL_BYTES = 2 * 1024**3
_MASS_TOL = 1e-12


def _probs(raw: Any) -> tuple[float, ...] | float:
    if isinstance(raw, Mapping):
        return float(raw["poisson"])
    return tuple(float(v) for v in raw)


@dataclass(frozen=True)
class InelasticStateSpec:
    """Level dynamics; each of ``pi``, ``epsilon``, ``gamma`` is a probability
    list over levels moved per stage, or a Poisson rate in levels/second."""

    D_p: int
    D_u: int
    pi: tuple[float, ...] | float
    epsilon: tuple[float, ...] | float = (1.0,)
    gamma: tuple[float, ...] | float = (1.0,)

    def __post_init__(self):
        if self.D_p < 1 or self.D_u < 0:
            raise ValidationError("need D_p >= 1 and D_u >= 0")
        for name in ("pi", "epsilon", "gamma"):
            v = getattr(self, name)
            if isinstance(v, tuple):
                if any(p < 0 for p in v):
                    raise ValidationError(f"{name} probabilities must be non-negative")
                if abs(math.fsum(v) - 1.0) > _MASS_TOL:
                    raise ValidationError(f"{name} probabilities must sum to 1, got {math.fsum(v)}")
            elif not v >= 0:
                raise ValidationError(f"{name} rate must be >= 0")

    @property
    def D(self) -> int:
        return self.D_p + self.D_u + 2

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "InelasticStateSpec":
        return cls(
            D_p=int(doc["D_p"]),
            D_u=int(doc.get("D_u", 0)),
            pi=_probs(doc["pi"]),
            epsilon=_probs(doc.get("epsilon", [1.0])),
            gamma=_probs(doc.get("gamma", [1.0])),
        )


@dataclass(frozen=True, eq=False)
class LevelChain:
    spec: InelasticStateSpec
    P_p_deny: np.ndarray
    P_p_admit: np.ndarray
    P_u_deny: np.ndarray
    P_u_admit: np.ndarray

    @property
    def D(self) -> int:
        return self.spec.D

    def level_index(self, w: int) -> int:
        return w + self.spec.D_u

    def matrix(self, admit: bool) -> np.ndarray:
        """``D x D`` level transition matrix for deny (False) or admit (True)."""
        Pu = self.P_u_admit if admit else self.P_u_deny
        Pp = self.P_p_admit if admit else self.P_p_deny
        D, Du = self.D, self.spec.D_u
        out = np.zeros((D, D))
        out[: Du + 1] = Pu
        out[Du + 1 :, Du + 1 :] = Pp
        return out

    @property
    def P_I(self) -> tuple[np.ndarray, np.ndarray]:
        return self.matrix(False), self.matrix(True)


def _level_probs(v, count: int, delta_T: float) -> np.ndarray:
    """First ``count`` level-move probabilities with overshoot folded into the last entry."""
    if isinstance(v, tuple):
        return custom_step_probs(v, count)
    # Poisson rate in levels/second; one level per "step"
    return poisson_step_probs(v, 1.0, delta_T, count)


def build_level_chain(spec: InelasticStateSpec, delta_T: float = 1.0) -> LevelChain:
    """Persistence and urgency transition matrices for deny/admit.

    ``delta_T`` only matters for Poisson-rate parameters.
    """
    Dp, Du = spec.D_p, spec.D_u
    D = spec.D

    # deny, persistence: w -> w+l w.p. pi_l, overshoot rho_w into D_p+1
    pi = _level_probs(spec.pi, Dp, delta_T)  # pi_0..pi_{Dp-1}, tail
    Ppd = np.zeros((Dp + 1, Dp + 1))
    for w in range(1, Dp + 1):
        r = w - 1
        span = Dp + 1 - w  # moves that stay within 1..D_p
        Ppd[r, r : r + span] = pi[:span]
        Ppd[r, Dp] = math.fsum(pi[span:])
    Ppd[Dp, Dp] = 1.0

    # admit, persistence: w -> w-l w.p. eps_l, overshoot eta_w into level 1
    eps = _level_probs(spec.epsilon, max(Dp - 1, 1), delta_T)
    Ppa = np.zeros((Dp + 1, Dp + 1))
    Ppa[0, 0] = 1.0
    for w in range(2, Dp + 1):
        r = w - 1
        for l in range(0, w - 1):  # lands on level w-l >= 2
            Ppa[r, r - l] = eps[l]
        Ppa[r, 0] = math.fsum(eps[w - 1 :])
    Ppa[Dp, Dp] = 1.0

    # deny, urgency: w -> w-l w.p. gamma_l, overshoot phi_{-w} into D_p+1
    gam = _level_probs(spec.gamma, Du + 1, delta_T)
    Pud = np.zeros((Du + 1, D))
    for w in range(-Du, 1):
        r = w + Du
        for l in range(0, w + Du + 1):
            Pud[r, r - l] = gam[l]
        Pud[r, D - 1] = math.fsum(gam[w + Du + 1 :])

    # admit, urgency: straight to level 1
    Pua = np.zeros((Du + 1, D))
    Pua[:, Du + 1] = 1.0
    return LevelChain(spec, Ppd, Ppa, Pud, Pua)


def build_composite_control_space(
    stateless: ControlSpace,
    stateful_load: float,
    stateful_reward: float,
    stateful_members: Sequence[int] = (),
    prune_dominated: bool = False,
) -> ControlSpace:
    """Product of the stateless actions with deny/admit of the stateful set.

    Composite actions are ordered by total load, then reward, then
    ``(a_1, a_2)``. With ``prune_dominated`` an action is dropped when another
    carries no more load and no less reward, one of them strictly.
    """
    if stateless.calibrated:
        raise ValidationError("compose before calibrating")
    if set(stateful_members) & {j for mem in stateless.members for j in mem}:
        raise ValidationError("stateless and stateful flow sets must be disjoint")
    items = []
    for a1 in (0, 1):
        for a2 in range(stateless.m):
            L = stateless.loads[a2] + a1 * stateful_load
            V = stateless.rewards[a2] + a1 * stateful_reward
            mem = stateless.members[a2] + (tuple(stateful_members) if a1 else ())
            items.append((L, V, a1, a2, mem))
    items.sort(key=lambda it: (it[0], it[1], it[2], it[3]))
    if prune_dominated:
        kept = []
        for it in items:
            dominated = any(
                o is not it and o[0] <= it[0] and o[1] >= it[1] and (o[0] < it[0] or o[1] > it[1])
                for o in items
            )
            if not dominated:
                kept.append(it)
        items = kept
    return ControlSpace(
        bandwidth=stateless.bandwidth,
        loads=np.array([it[0] for it in items]),
        rewards=np.array([it[1] for it in items]),
        members=tuple(it[4] for it in items),
        admits_stateful=tuple(bool(it[2]) for it in items),
        stateful_reward=np.array([it[2] * stateful_reward for it in items], dtype=float),
    )


def _max_bytes() -> int:
    raw = os.environ.get("ADMCTL_MAX_MODEL_BYTES")
    return int(raw) if raw else DEFAULT_MAX_MODEL_BYTES


def augment_model(base: SspModel, chain: LevelChain, control: ControlSpace | None = None, max_bytes: int | None = None) -> SspModel:
    """Product model over ``(level, step, stage)``.

    Transition probabilities multiply the size-time factor by the level
    factor of the action's deny/admit choice. Admitting the stateful set
    while permanently suspended earns only the stateless part of the reward.
    """
    control = control if control is not None else base.control
    if control is None or control.admits_stateful is None:
        raise ValidationError("augmentation needs a composite control space")
    if base.levels != 1:
        raise ValidationError("base model is already augmented")
    D = chain.D
    m, K, W, _ = base.trans.shape
    Wa = D * W
    need = m * K * Wa * Wa * 8
    cap = _max_bytes() if max_bytes is None else max_bytes
    if need > cap:
        raise CapacityError(
            f"augmented model needs {need} bytes for {m} actions x {K} stage blocks of "
            f"{Wa}x{Wa}; cap is {cap} bytes",
            required_bytes=need,
            cap_bytes=cap,
        )
    PI = chain.P_I
    trans = np.empty((m, K, Wa, Wa))
    for a in range(m):
        lev = PI[1] if control.admits_stateful[a] else PI[0]
        for kk in range(K):
            trans[a, kk] = np.kron(lev, base.trans[a, kk])
    inel = np.tile(base.inelastic_cost, (1, D))
    dT = base.grid.delta_T
    susp = slice((D - 1) * W, D * W)
    for a in range(m):
        if control.admits_stateful[a]:
            inel[a, susp] = base.inelastic_cost[a] + dT * control.stateful_reward[a]
    rb = None if base.rate_bound_cost is None else np.tile(base.rate_bound_cost, (1, D))
    return replace(
        base,
        trans=trans,
        inelastic_cost=inel,
        row_open=np.tile(base.row_open, D),
        col_done=np.tile(base.col_done, D),
        rate_bound_cost=rb,
        levels=D,
        initial_level=chain.level_index(0),
        control=control,
    )
