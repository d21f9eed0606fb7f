# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled backward pass and trajectory sampler.

Same signatures and array conventions as ``_pykernels``. The backward pass
only visits the non-zero column band of each transition row.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdint cimport uint64_t, int32_t, int64_t

cnp.import_array()

BACKEND = "cython"
cdef double TIE_RTOL = 1e-12


cdef inline uint64_t _mix64(uint64_t z) noexcept nogil:
    z = z ^ (z >> 30)
    z = z * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = z ^ (z >> 27)
    z = z * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t seed, uint64_t traj, uint64_t stage) noexcept nogil:
    cdef uint64_t h = _mix64(seed + <uint64_t>0x9E3779B97F4A7C15ULL * (traj + 1))
    h = _mix64(h ^ ((stage + 1) * <uint64_t>0xD1B54A32D192ED03ULL))
    return <double>(h >> 11) * (1.0 / 9007199254740992.0)


def uniforms(seed, traj, stage):
    cdef uint64_t s = <uint64_t>seed
    cdef uint64_t st = <uint64_t>stage
    t = np.ascontiguousarray(np.atleast_1d(np.asarray(traj, dtype=np.uint64)))
    cdef uint64_t[::1] tv = t
    out = np.empty(t.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t j
    for j in range(t.shape[0]):
        ov[j] = _uniform(s, tv[j], st)
    return out if np.ndim(traj) else out[0]


def _bands(double[:, :, :, ::1] F):
    cdef Py_ssize_t m = F.shape[0], K = F.shape[1], W = F.shape[2]
    lo_arr = np.zeros((m, K, W), dtype=np.int32)
    hi_arr = np.zeros((m, K, W), dtype=np.int32)
    cdef int32_t[:, :, ::1] lo = lo_arr
    cdef int32_t[:, :, ::1] hi = hi_arr
    cdef Py_ssize_t a, kk, r, c
    with nogil:
        for a in range(m):
            for kk in range(K):
                for r in range(W):
                    c = 0
                    while c < W and F[a, kk, r, c] == 0.0:
                        c += 1
                    lo[a, kk, r] = <int32_t>c
                    c = W
                    while c > 0 and F[a, kk, r, c - 1] == 0.0:
                        c -= 1
                    hi[a, kk, r] = <int32_t>c
    return lo_arr, hi_arr


def sweep(trans, dest_cost, row_open, row_cost, policy=None, want_q=False):
    cdef double[:, :, :, ::1] F = np.ascontiguousarray(trans, dtype=np.float64)
    cdef double[:, ::1] D = np.ascontiguousarray(dest_cost, dtype=np.float64)
    cdef double[::1] op = np.ascontiguousarray(row_open, dtype=np.float64)
    cdef double[:, ::1] RC = np.ascontiguousarray(row_cost, dtype=np.float64)
    cdef Py_ssize_t m = F.shape[0], K = F.shape[1], W = F.shape[2]
    cdef Py_ssize_t N = D.shape[0]
    lo_arr, hi_arr = _bands(F)
    cdef int32_t[:, :, ::1] lo = lo_arr
    cdef int32_t[:, :, ::1] hi = hi_arr

    J_arr = np.zeros((N + 1, W))
    pol_arr = np.zeros((N, W), dtype=np.int32)
    cdef double[:, ::1] J = J_arr
    cdef int32_t[:, ::1] pol = pol_arr
    cdef bint fixed = policy is not None
    cdef int32_t[:, ::1] P
    if fixed:
        P = np.ascontiguousarray(policy, dtype=np.int32)
    cdef bint keep_q = bool(want_q) and not fixed
    Q_arr = np.empty((N, W, m)) if keep_q else None
    cdef double[:, :, ::1] Q
    if keep_q:
        Q = Q_arr

    qrow_arr = np.empty(m)
    cdef double[::1] qrow = qrow_arr
    cdef Py_ssize_t k, kk, r, a, c, a0, a1, best_a
    cdef double s1, s2, q, lo_q, big, f
    with nogil:
        for k in range(N - 1, -1, -1):
            kk = k if K > 1 else 0
            for r in range(W):
                if fixed:
                    a0 = P[k, r]
                    a1 = a0 + 1
                else:
                    a0 = 0
                    a1 = m
                lo_q = 0.0
                big = 0.0
                for a in range(a0, a1):
                    s1 = 0.0
                    s2 = 0.0
                    for c in range(lo[a, kk, r], hi[a, kk, r]):
                        f = F[a, kk, r, c]
                        s1 = s1 + f * J[k + 1, c]
                        s2 = s2 + f * D[k, c]
                    q = s1 + op[r] * s2 + RC[a, r]
                    qrow[a] = q
                    if keep_q:
                        Q[k, r, a] = q
                    if a == a0 or q < lo_q:
                        lo_q = q
                    if fabs(q) > big:
                        big = fabs(q)
                best_a = a0
                while qrow[best_a] > lo_q + TIE_RTOL * big:
                    best_a += 1
                J[k, r] = qrow[best_a]
                pol[k, r] = <int32_t>best_a
    return J_arr, pol_arr, Q_arr


def simulate(trans, policy, Py_ssize_t start_row, seed, Py_ssize_t first, Py_ssize_t count):
    cdef double[:, :, :, ::1] F = np.ascontiguousarray(trans, dtype=np.float64)
    cdef int32_t[:, ::1] P = np.ascontiguousarray(policy, dtype=np.int32)
    cdef Py_ssize_t K = F.shape[1], W = F.shape[2], N = P.shape[0]
    paths_arr = np.empty((count, N + 1), dtype=np.int64)
    cdef int64_t[:, ::1] paths = paths_arr
    cdef uint64_t s = <uint64_t>seed
    cdef Py_ssize_t j, k, kk, r, c, a, nxt, last
    cdef double u, acc, f
    with nogil:
        for j in range(count):
            r = start_row
            paths[j, 0] = r
            for k in range(N):
                kk = k if K > 1 else 0
                a = P[k, r]
                u = _uniform(s, <uint64_t>(first + j), <uint64_t>k)
                acc = 0.0
                nxt = -1
                last = -1
                for c in range(W):
                    f = F[a, kk, r, c]
                    if f > 0.0:
                        last = c
                    acc = acc + f
                    if u < acc:
                        nxt = c
                        break
                if nxt < 0:
                    nxt = last
                r = nxt
                paths[j, k + 1] = r
    return paths_arr
