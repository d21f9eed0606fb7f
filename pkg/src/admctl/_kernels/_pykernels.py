"""Numpy implementations of the hot loops (fallback when the extension is absent).

Array conventions shared with ``_ckernels.pyx``:

* ``trans``      float64 ``(m, K, W, W)``; ``K`` is 1 (stationary) or ``N``.
* ``dest_cost``  float64 ``(N, W)``; cost charged on arrival at column ``c``
  during stage ``k``, only for rows flagged in ``row_open``.
* ``row_open``   float64 ``(W,)`` of 0/1.
* ``row_cost``   float64 ``(m, W)``; per-transition cost by row and action.
* policies are int32 ``(N, W)`` arrays of 0-based action indices.

Action values that differ by less than ``TIE_RTOL`` times the largest
magnitude in the row count as tied, and ties go to the smallest index. This
keeps exact ties from being decided by summation-order rounding, so both
backends return the same policy.
"""

import numpy as np

BACKEND = "python"
TIE_RTOL = 1e-12

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_STAGE_MULT = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(z):
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def uniforms(seed, traj, stage):
    """Counter-based uniforms in [0, 1) keyed by ``(seed, trajectory, stage)``."""
    with np.errstate(over="ignore"):
        traj = np.asarray(traj, dtype=np.uint64)
        key = np.uint64(seed) + _GOLDEN * (traj + np.uint64(1))
        h = _mix64(key)
        h = _mix64(h ^ (np.uint64(stage + 1) * _STAGE_MULT))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def _first_near_min(q):
    """Per column, the smallest row index within the tie band of the column minimum."""
    lo = q.min(axis=0)
    tol = TIE_RTOL * np.abs(q).max(axis=0)
    return np.argmax(q <= lo + tol, axis=0)


def sweep(trans, dest_cost, row_open, row_cost, policy=None, want_q=False):
    """Backward pass over stages ``N-1 .. 0``.

    Returns ``(J, pol, Q)`` with ``J`` of shape ``(N+1, W)`` (``J[N] = 0``),
    the 0-based action table ``pol`` and, if requested, ``Q`` of shape
    ``(N, W, m)`` (``None`` for policy evaluation).
    """
    m, K, W, _ = trans.shape
    N = dest_cost.shape[0]
    J = np.zeros((N + 1, W))
    pol = np.zeros((N, W), dtype=np.int32)
    Q = np.empty((N, W, m)) if (want_q and policy is None) else None
    rows = np.arange(W)
    rhs = np.empty((W, 2))
    for k in range(N - 1, -1, -1):
        F = trans[:, k if K > 1 else 0]
        rhs[:, 0] = J[k + 1]
        rhs[:, 1] = dest_cost[k]
        if policy is None:
            both = np.matmul(F, rhs)  # (m, W, 2)
            q = both[:, :, 0] + row_open[None, :] * both[:, :, 1] + row_cost
            best = _first_near_min(q)
            pol[k] = best
            J[k] = q[best, rows]
            if Q is not None:
                Q[k] = q.T
        else:
            act = policy[k]
            both = np.matmul(F[act, rows], rhs)  # (W, 2)
            J[k] = both[:, 0] + row_open * both[:, 1] + row_cost[act, rows]
            pol[k] = act
    return J, pol, Q


def simulate(trans, policy, start_row, seed, first, count):
    """Sample ``count`` row paths of length ``N+1`` starting at ``start_row``.

    Trajectory ``first + j`` at stage ``k`` draws one uniform ``u`` and moves
    to the first column whose cumulative probability exceeds ``u``.
    """
    m, K, W, _ = trans.shape
    N = policy.shape[0]
    paths = np.empty((count, N + 1), dtype=np.int64)
    paths[:, 0] = start_row
    traj = np.arange(first, first + count, dtype=np.uint64)
    cur = np.full(count, start_row, dtype=np.int64)
    last_pos = np.arange(W)
    for k in range(N):
        F = trans[:, k if K > 1 else 0]
        acts = policy[k, cur]
        rows = F[acts, cur]  # (count, W)
        cum = np.cumsum(rows, axis=1)
        u = uniforms(seed, traj, k)
        nxt = (cum <= u[:, None]).sum(axis=1)
        over = nxt >= W
        if np.any(over):
            # rounding left u above the row total: take the last probable column
            pos = np.where(rows[over] > 0, last_pos[None, :], -1)
            nxt[over] = pos.max(axis=1)
        cur = nxt.astype(np.int64)
        paths[:, k + 1] = cur
    return paths
