"""Elastic progress as a counting process over steps, and fixed-rate risk predictions.

Per stage the elastic flow advances ``y`` steps with probability ``p[y]``;
everything that would overshoot the last step is folded into ``p[M]``.
The ``(M+1) x (M+1)`` upper-triangular progress matrix then drives the
step distribution ``f(k) = f(k-1) P`` from ``f(0) = e_0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import poisson

from .errors import DomainError, NumericError, ValidationError
from .scenario import Discretization

__all__ = [
    "poisson_step_probs",
    "custom_step_probs",
    "progress_matrix",
    "propagate",
    "mean_variance",
    "milestone_risk",
    "deadline_miss_risk",
    "expected_stages_to_completion",
    "progress_envelope",
    "policy_progress_matrices",
    "RiskReport",
    "risk_report",
]

_MASS_TOL = 1e-12


def _fold_tail(head: np.ndarray, tail: float | None = None) -> np.ndarray:
    """Append the completion mass so that ``math.fsum(p) == 1.0`` exactly.

    Without ``tail`` the completion mass is whatever the head leaves over.
    With an accurately computed ``tail`` (which may be far below one ulp of
    1), the tail is kept as given and the largest entry absorbs the rounding
    instead, so tiny completion probabilities are not swamped by
    cancellation noise.
    """
    p = np.empty(len(head) + 1)
    p[:-1] = head
    if tail is None:
        big = int(np.argmax(head))
        while math.fsum(p[:-1]) > 1.0:
            p[big] = np.nextafter(p[big], 0.0)
        p[-1] = 1.0 - math.fsum(p[:-1])
    else:
        p[-1] = tail
        big = int(np.argmax(p))
        p[big] += 1.0 - math.fsum(p)
    for _ in range(64):
        total = math.fsum(p)
        if total == 1.0:
            break
        if tail is not None:
            p[big] = np.nextafter(p[big], 2.0 if total < 1.0 else 0.0)
        elif total < 1.0:
            p[-1] = np.nextafter(p[-1], 2.0)
        elif p[-1] > 0.0:
            p[-1] = np.nextafter(p[-1], 0.0)
        else:
            p[big] = np.nextafter(p[big], 0.0)
    return p


def poisson_step_probs(rate: float, delta_S: float, delta_T: float, M: int) -> np.ndarray:
    """Step distribution ``[p_0 .. p_M]`` for a Poisson counting process of mean ``rate/delta_S`` steps/s."""
    if not rate >= 0:
        raise DomainError(f"elastic rate must be >= 0, got {rate}")
    if not (delta_S > 0 and delta_T > 0):
        raise DomainError("delta_S and delta_T must be positive")
    if M < 1:
        raise DomainError("M must be >= 1")
    lam = rate * delta_T / delta_S
    if lam == 0:
        return _fold_tail(np.eye(1, M).ravel(), 0.0)
    head = poisson.pmf(np.arange(M), lam)
    return _fold_tail(np.asarray(head, dtype=float), float(poisson.sf(M - 1, lam)))


def custom_step_probs(pbar: Sequence[float] | Iterable[float] | Callable[[int], float], M: int) -> np.ndarray:
    """Step distribution from an arbitrary per-stage step-count law.

    ``pbar`` is a finite sequence/iterable of probabilities ``pbar[l]`` or a
    callable ``l -> pbar[l]``; mass beyond ``M-1`` steps (including any
    unspecified tail) lands on completion.
    """
    if M < 1:
        raise DomainError("M must be >= 1")
    if callable(pbar):
        head = np.array([float(pbar(l)) for l in range(M)])
        total = math.fsum(head)
    else:
        values = np.array([float(v) for v in pbar])
        total = math.fsum(values)
        head = np.zeros(M)
        head[: min(M, len(values))] = values[:M]
        if np.any(values < 0):
            raise ValidationError("step-count probabilities must be non-negative")
    if np.any(head < 0):
        raise ValidationError("step-count probabilities must be non-negative")
    if total > 1 + _MASS_TOL:
        raise ValidationError(f"step-count probabilities carry mass {total} > 1")
    return _fold_tail(head)


def progress_matrix(p: np.ndarray) -> np.ndarray:
    """Upper-triangular per-stage step transition matrix built from ``p``."""
    p = np.asarray(p, dtype=float)
    M = len(p) - 1
    P = np.zeros((M + 1, M + 1))
    for x in range(M):
        P[x, x:M] = p[: M - x]
        P[x, M] = math.fsum(p[M - x:])
    P[M, M] = 1.0
    return P


def propagate(P, N: int) -> np.ndarray:
    """Step distributions ``f(0..N)`` as an ``(N+1, M+1)`` array.

    ``P`` is one progress matrix or a sequence of ``N`` stage-dependent ones.
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    mats = np.asarray(P, dtype=float)
    if mats.ndim == 2:
        mats = np.broadcast_to(mats, (N,) + mats.shape)
    elif len(mats) != N:
        raise ValidationError(f"expected {N} stage matrices, got {len(mats)}")
    W = mats.shape[-1]
    f = np.zeros((N + 1, W))
    f[0, 0] = 1.0
    for k in range(1, N + 1):
        f[k] = f[k - 1] @ mats[k - 1]
    return f


def mean_variance(f: np.ndarray) -> tuple[float, float]:
    f = np.asarray(f, dtype=float)
    x = np.arange(len(f))
    theta = float(x @ f)
    sigma2 = float(((x - theta) ** 2) @ f)
    return theta, max(sigma2, 0.0)


def milestone_risk(f: np.ndarray, x: int) -> float:
    """Probability of not having reached step ``x``.

    Taken as one minus the mass at or beyond ``x``: when that mass is tiny
    the result stays exactly 1 instead of carrying the rounding of the bulk.
    """
    f = np.asarray(f, dtype=float)
    if not 0 <= x < len(f):
        raise DomainError(f"step {x} outside 0..{len(f) - 1}")
    if x == 0:
        return 0.0
    return min(1.0, max(0.0, 1.0 - math.fsum(f[x:])))


def deadline_miss_risk(P, N: int) -> float:
    f = propagate(P, N)
    return milestone_risk(f[-1], f.shape[1] - 1)


def expected_stages_to_completion(P: np.ndarray) -> np.ndarray:
    """Expected number of stages to reach the last step, from every step.

    Back-substitution on the upper-triangular transient block.
    """
    P = np.asarray(P, dtype=float)
    M = P.shape[0] - 1
    t = np.zeros(M + 1)
    for x in range(M - 1, -1, -1):
        stay = P[x, x]
        if stay >= 1.0:
            raise NumericError(f"completion unreachable from step {x}; expected time is infinite")
        t[x] = (1.0 + P[x, x + 1 : M] @ t[x + 1 : M]) / (1.0 - stay)
    return t


def progress_envelope(f_seq: np.ndarray, d: Discretization) -> list[tuple[float, float, float, float]]:
    """``(t, s_mean, s_low, s_high)`` per stage, clamped to ``[0, S]``."""
    rep = risk_report(f_seq, d)
    return list(zip(rep.t.tolist(), rep.s_mean.tolist(), rep.s_low.tolist(), rep.s_high.tolist()))


def policy_progress_matrices(model, mu) -> np.ndarray:
    """Stage-dependent transition blocks ``P^mu(k)``, shape ``(N, W, W)``.

    Row ``r`` of block ``k`` is the transition row of the action the policy
    takes in cell ``(r, k)``. For a base model ``W = M+1``.
    """
    table = np.asarray(mu.table if hasattr(mu, "table") else mu)
    N, W = model.N, model.width
    out = np.empty((N, W, W))
    rows = np.arange(W)
    for k in range(N):
        acts = table[k] - 1
        out[k] = model.block(k)[acts, rows, :]
    return out


@dataclass(frozen=True)
class RiskReport:
    k: np.ndarray
    t: np.ndarray
    theta: np.ndarray
    sigma: np.ndarray
    s_mean: np.ndarray
    s_low: np.ndarray
    s_high: np.ndarray
    miss_risk_to_date: np.ndarray

    columns = ("k", "t", "theta", "sigma", "s_mean", "s_low", "s_high", "miss_risk_to_date")

    def rows(self):
        cols = [getattr(self, c) for c in self.columns]
        for vals in zip(*cols):
            yield (int(vals[0]),) + tuple(float(v) for v in vals[1:])

    @property
    def miss_risk(self) -> float:
        return float(self.miss_risk_to_date[-1])


def risk_report(f_seq: np.ndarray, d: Discretization) -> RiskReport:
    f_seq = np.asarray(f_seq, dtype=float)
    K, W = f_seq.shape
    x = np.arange(W)
    theta = f_seq @ x
    sigma = np.sqrt(np.maximum(((x[None, :] - theta[:, None]) ** 2 * f_seq).sum(axis=1), 0.0))
    S = d.size

    def s_of(steps):
        return np.clip(S - d.delta_S * steps, 0.0, S)

    ks = np.arange(K)
    miss = np.array([milestone_risk(f, W - 1) for f in f_seq])
    return RiskReport(
        k=ks,
        t=d.stage_time(ks),
        theta=theta,
        sigma=sigma,
        s_mean=s_of(theta),
        s_low=s_of(theta + sigma),
        s_high=s_of(theta - sigma),
        miss_risk_to_date=miss,
    )
