"""Stochastic shortest path model over the step-stage grid, and its solution.

The state graph is layered by stage: from stage ``k < N`` every action moves
to stage ``k+1``, and every cell of stage ``N`` moves to the cost-free
terminal. A model therefore only stores, per action, the ``W x W`` block of
transition probabilities between consecutive stages (``W = M+1``, or
``D (M+1)`` once inelastic levels are added) and the cost structure:

* elastic:    ``-V^E((k+1) dT)`` on transitions that complete the flow,
* inelastic:  ``-V^I(a) dT`` on every transition out of a stage ``k < N``,
* rate bound: a non-negative destination cost on transitions out of open cells.

Solving is one exact backward pass over the stages.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels
from ._kernels import _pykernels
from .chain import poisson_step_probs, progress_matrix
from .errors import CalibrationError, NumericError, ValidationError
from .scenario import ControlSpace, Discretization, LinkScenario

__all__ = [
    "SspModel",
    "Policy",
    "Solution",
    "CostVector",
    "assemble_model",
    "solve",
    "evaluate_policy",
    "decompose_cost",
    "lambda_sweep",
    "constant_policy",
    "value_iteration",
]


@dataclass(frozen=True, eq=False)
class SspModel:
    grid: Discretization
    trans: np.ndarray
    elastic_reward: np.ndarray
    inelastic_cost: np.ndarray
    row_open: np.ndarray
    col_done: np.ndarray
    lambda_I: float = 1.0
    rate_bound_cost: np.ndarray | None = None
    rates: np.ndarray | None = None
    levels: int = 1
    initial_level: int = 0
    control: ControlSpace | None = field(default=None, repr=False)

    def __post_init__(self):
        m, K, W, W2 = self.trans.shape
        if W != W2 or W != self.levels * (self.grid.M + 1):
            raise ValidationError("transition blocks do not match the grid")
        if K not in (1, self.grid.N):
            raise ValidationError("transition blocks must be stationary or one per stage")
        arrays = [self.trans, self.elastic_reward, self.inelastic_cost]
        if self.rate_bound_cost is not None:
            arrays.append(self.rate_bound_cost)
        if not all(np.all(np.isfinite(a)) for a in arrays) or not np.isfinite(self.lambda_I):
            raise NumericError("model contains NaN or Inf")

    # structure -----------------------------------------------------------
    @property
    def m(self) -> int:
        return self.trans.shape[0]

    @property
    def width(self) -> int:
        return self.trans.shape[2]

    @property
    def M(self) -> int:
        return self.grid.M

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def n(self) -> int:
        return self.levels * self.grid.n

    @property
    def terminal_index(self) -> int:
        return self.n

    def block(self, k: int) -> np.ndarray:
        """Transition blocks ``(m, W, W)`` from stage ``k`` to ``k+1``."""
        return self.trans[:, k if self.trans.shape[1] > 1 else 0]

    def row(self, level: int, x: int) -> int:
        return level * (self.M + 1) + x

    def state_index(self, x: int, k: int, level: int = 0) -> int:
        """1-based global index; levels are stored level-major."""
        return level * self.grid.n + 1 + x + (self.M + 1) * k

    def state_of(self, i: int) -> tuple[int, int, int]:
        """``(level, x, k)`` of a 1-based global index."""
        level, rest = divmod(i - 1, self.grid.n)
        k, x = divmod(rest, self.M + 1)
        return level, x, k

    @property
    def start_row(self) -> int:
        return self.row(self.initial_level, 0)

    # cost pieces fed to the kernels -----------------------------------------
    def elastic_dest(self) -> np.ndarray:
        return -np.outer(self.elastic_reward, self.col_done.astype(float))

    def ratebound_dest(self) -> np.ndarray:
        if self.rate_bound_cost is None:
            return np.zeros((self.N, self.width))
        return self.rate_bound_cost

    def total_dest(self) -> np.ndarray:
        dest = self.elastic_dest()
        if self.rate_bound_cost is not None:
            dest = dest + self.rate_bound_cost
        return dest

    def with_lambda(self, lambda_I: float) -> "SspModel":
        if not lambda_I >= 0:
            raise ValidationError("lambda_I must be >= 0")
        return replace(self, lambda_I=float(lambda_I))

    def with_rate_bound(self, cost: np.ndarray | None) -> "SspModel":
        return replace(self, rate_bound_cost=cost)

    # dense view, for small models and cross-checks ------------------------
    def dense(self):
        """Full ``n x n`` matrices ``(F, G_E, G_I, G_0)``, each of shape ``(m, n, n)``.

        Every stage-``N`` cell and the terminal collapse onto index ``n``.
        """
        m, W, N, n = self.m, self.width, self.N, self.n
        M1 = self.M + 1
        F = np.zeros((m, n, n))
        GE = np.zeros((m, n, n))
        GI = np.zeros((m, n, n))
        G0 = np.zeros((m, n, n))

        def gidx(r, k):
            lev, x = divmod(r, M1)
            return self.state_index(x, k, lev) - 1

        term = n - 1
        rb = self.ratebound_dest()
        for k in range(N + 1):
            for r in range(W):
                i = gidx(r, k)
                if k == N:
                    F[:, i, :] = 0.0
                    F[:, i, term] = 1.0
                    continue
                blk = self.block(k)
                for c in range(W):
                    j = gidx(c, k + 1)
                    F[:, i, j] = blk[:, r, c]
                    GI[:, i, j] = np.where(blk[:, r, c] > 0, self.inelastic_cost[:, r], 0.0)
                    if self.row_open[r]:
                        if self.col_done[c]:
                            GE[:, i, j] = np.where(blk[:, r, c] > 0, -self.elastic_reward[k], 0.0)
                        G0[:, i, j] = np.where(blk[:, r, c] > 0, rb[k, c], 0.0)
        return F, GE, GI, G0


@dataclass(frozen=True, eq=False)
class Policy:
    """Stationary policy as a stage-by-row table of 1-based actions.

    ``table`` has shape ``(N+1, W)``; the stage-``N`` row is all ones (no
    decision is left to make there).
    """

    table: np.ndarray

    def __call__(self, i: int, model: SspModel) -> int:
        level, x, k = model.state_of(i)
        return int(self.table[k, model.row(level, x)])

    def as_vector(self, model: SspModel) -> np.ndarray:
        """Length-``n`` vector ``mu(i)`` for ``i = 1..n``."""
        N, M1, L = model.N, model.M + 1, model.levels
        t = self.table.reshape(N + 1, L, M1).transpose(1, 0, 2)
        return t.reshape(-1).copy()

    def kernel_table(self) -> np.ndarray:
        return np.ascontiguousarray(self.table[:-1] - 1, dtype=np.int32)

    def __eq__(self, other):
        return isinstance(other, Policy) and np.array_equal(self.table, other.table)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CostVector:
    """Expected total costs as ``(N+1, W)`` stage-by-row tables."""

    J: np.ndarray
    J_E: np.ndarray | None = None
    J_I: np.ndarray | None = None
    J_0: np.ndarray | None = None

    def at(self, model: SspModel, i: int = 1) -> float:
        level, x, k = model.state_of(i)
        return float(self.J[k, model.row(level, x)])

    def initial(self, model: SspModel) -> float:
        return float(self.J[0, model.start_row])

    def vector(self, model: SspModel, which: str = "J") -> np.ndarray:
        """Length-``n`` vector in global index order."""
        table = getattr(self, which)
        N, M1, L = model.N, model.M + 1, model.levels
        return table.reshape(N + 1, L, M1).transpose(1, 0, 2).reshape(-1).copy()


@dataclass(frozen=True, eq=False)
class Solution:
    Q: np.ndarray  # (N, W, m), stage-N rows are identically 0
    policy: Policy
    cost: CostVector

    def q_matrix(self, model: SspModel) -> np.ndarray:
        """``n x m`` matrix in global index order."""
        N, W, m = self.Q.shape
        full = np.zeros((N + 1, W, m))
        full[:N] = self.Q
        L, M1 = model.levels, model.M + 1
        return full.reshape(N + 1, L, M1, m).transpose(1, 0, 2, 3).reshape(-1, m)


def _check_model(model: SspModel):
    if not np.isfinite(model.lambda_I):
        raise NumericError("lambda_I is not finite")


def assemble_model(
    scenario: LinkScenario,
    grid: Discretization,
    control: ControlSpace,
    step_dists: Sequence[np.ndarray] | None = None,
) -> SspModel:
    """Per-action transition blocks and costs for the base (level-free) model.

    ``step_dists`` holds one step distribution per action, or one
    ``(N, M+1)`` array of stage-dependent distributions per action; by
    default Poisson distributions at the action rates are used.
    """
    if not control.calibrated:
        raise CalibrationError("control space must be calibrated before assembly")
    M, N = grid.M, grid.N
    rates = control.rates
    if step_dists is None:
        step_dists = [poisson_step_probs(R, grid.delta_S, grid.delta_T, M) for R in rates]
    if len(step_dists) != control.m:
        raise ValidationError(f"need {control.m} step distributions, got {len(step_dists)}")
    dists = [np.asarray(p, dtype=float) for p in step_dists]
    staged = any(p.ndim == 2 for p in dists)
    K = N if staged else 1
    trans = np.empty((control.m, K, M + 1, M + 1))
    for a, p in enumerate(dists):
        if p.ndim == 1:
            trans[a] = progress_matrix(p)
        else:
            if p.shape != (N, M + 1):
                raise ValidationError("stage-dependent step distributions must be (N, M+1)")
            for k in range(N):
                trans[a, k] = progress_matrix(p[k])
    dT = grid.delta_T
    ve = np.array([scenario.reward_at(float(grid.stage_time(k + 1))) for k in range(N)])
    xs = np.arange(M + 1)
    inel = -np.outer(control.rewards * dT, np.ones(M + 1))
    return SspModel(
        grid=grid,
        trans=trans,
        elastic_reward=ve,
        inelastic_cost=inel,
        row_open=xs < M,
        col_done=xs == M,
        lambda_I=scenario.lambda_I,
        rates=rates.copy(),
        control=control,
    )


def solve(model: SspModel, backend=None) -> Solution:
    """Optimal policy by one backward pass.

    Ties go to the smallest action. Values within a relative ``1e-12`` of the
    row minimum count as tied, so rounding cannot split an exact tie, and
    ``J`` is the value of the action actually chosen.
    """
    _check_model(model)
    k = backend or _kernels
    J, pol, Q = k.sweep(
        model.trans,
        model.total_dest(),
        model.row_open.astype(float),
        model.lambda_I * model.inelastic_cost,
        None,
        True,
    )
    table = np.ones((model.N + 1, model.width), dtype=np.int32)
    table[:-1] = pol + 1
    return Solution(Q=Q, policy=Policy(table), cost=CostVector(J))


def _evaluate(model, policy, dest, row_cost, backend=None):
    k = backend or _kernels
    J, _, _ = k.sweep(model.trans, dest, model.row_open.astype(float), row_cost, policy.kernel_table())
    return J


def _check_policy(model: SspModel, mu: Policy):
    t = mu.table
    if t.shape != (model.N + 1, model.width):
        raise ValidationError(f"policy table shape {t.shape} does not match model")
    if t.min() < 1 or t.max() > model.m:
        raise ValidationError("policy refers to actions outside 1..m")


def evaluate_policy(model: SspModel, mu: Policy, backend=None) -> CostVector:
    """Expected total cost of a fixed policy."""
    _check_policy(model, mu)
    J = _evaluate(model, mu, model.total_dest(), model.lambda_I * model.inelastic_cost, backend)
    return CostVector(J)


def decompose_cost(model: SspModel, mu: Policy, backend=None) -> CostVector:
    """Elastic, inelastic (unweighted) and rate-bound parts of a policy's cost."""
    _check_policy(model, mu)
    zeros_rc = np.zeros_like(model.inelastic_cost)
    zeros_dest = np.zeros((model.N, model.width))
    J_E = _evaluate(model, mu, model.elastic_dest(), zeros_rc, backend)
    J_I = _evaluate(model, mu, zeros_dest, model.inelastic_cost, backend)
    if model.rate_bound_cost is None:
        J_0 = np.zeros_like(J_E)
    else:
        J_0 = _evaluate(model, mu, model.rate_bound_cost, zeros_rc, backend)
    J = _evaluate(model, mu, model.total_dest(), model.lambda_I * model.inelastic_cost, backend)
    return CostVector(J, J_E, J_I, J_0)


def constant_policy(model: SspModel, action: int) -> Policy:
    if not 1 <= action <= model.m:
        raise ValidationError(f"action {action} outside 1..{model.m}")
    table = np.full((model.N + 1, model.width), action, dtype=np.int32)
    table[-1] = 1
    return Policy(table)


def value_iteration(model: SspModel, tol: float = 1e-12, max_sweeps: int | None = None) -> Solution:
    """Generic synchronous value iteration, kept to validate :func:`solve`.

    All stages are updated from the previous iterate until the sup-norm
    change is at most ``tol``.
    """
    _check_model(model)
    N, W, m = model.N, model.width, model.m
    max_sweeps = max_sweeps or 10 * (N + 2)
    dest = model.total_dest()
    open_ = model.row_open.astype(float)
    rc = model.lambda_I * model.inelastic_cost
    J = np.zeros((N + 1, W))
    Q = np.zeros((N, W, m))
    pol = np.zeros((N, W), dtype=np.int32)
    rows = np.arange(W)
    for _ in range(max_sweeps):
        Jn = np.zeros_like(J)
        for k in range(N):
            F = model.block(k)
            both = np.matmul(F, np.stack([J[k + 1], dest[k]], axis=1))
            Q[k] = (both[:, :, 0] + open_[None, :] * both[:, :, 1] + rc).T
            pol[k] = _pykernels._first_near_min(Q[k].T)
            Jn[k] = Q[k][rows, pol[k]]
        delta = np.max(np.abs(Jn - J))
        J = Jn
        if delta <= tol:
            break
    else:
        raise NumericError(f"value iteration did not converge in {max_sweeps} sweeps")
    table = np.ones((N + 1, W), dtype=np.int32)
    table[:-1] = pol + 1
    return Solution(Q=Q, policy=Policy(table), cost=CostVector(J))


@dataclass(frozen=True)
class SweepPoint:
    lambda_I: float
    elastic_utility: float
    inelastic_utility: float
    policy: Policy = field(compare=False, repr=False)


def lambda_sweep(model: SspModel, grid: Sequence[float]) -> list[SweepPoint]:
    """Re-solve for every ``lambda_I`` and report utilities from the initial state."""
    values = sorted(float(v) for v in grid)
    if not values:
        raise ValidationError("lambda grid must be non-empty")
    if values[0] < 0:
        raise ValidationError("lambda values must be >= 0")
    out = []
    for lam in values:
        mdl = model.with_lambda(lam)
        sol = solve(mdl)
        parts = decompose_cost(mdl, sol.policy)
        r = mdl.start_row
        out.append(SweepPoint(lam, -float(parts.J_E[0, r]), -float(parts.J_I[0, r]), sol.policy))
    return out
