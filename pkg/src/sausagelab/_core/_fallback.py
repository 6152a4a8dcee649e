"""Pure-Python kernels.

Line-for-line twin of ``_kernels.pyx``: same random-number consumption,
same search rule, same floating-point operation order, so both backends
return bit-identical walk samples.  Slow; used when the extension is not
built or when ``SAUSAGELAB_BACKEND=python``.
"""
from __future__ import annotations

import math
from bisect import bisect_right

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_INV53 = 1.0 / 9007199254740992.0

NAME = "python"


def _mix(z):
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _unif(key, ctr):
    z = _mix(key + (ctr + 1) * _GAMMA)
    return ((z >> 11) + 0.5) * _INV53


def _pkey(base, i):
    return _mix(base + (i + 1) * _GAMMA)


class _Walk:
    """One path's random state; ``step`` returns (holding time, next vertex)."""

    __slots__ = ("indptr", "indices", "cumprob", "rates", "key", "ctr")

    def __init__(self, indptr, indices, cumprob, rates, key):
        self.indptr = indptr
        self.indices = indices
        self.cumprob = cumprob
        self.rates = rates
        self.key = key
        self.ctr = 0

    def step(self, v):
        q = self.rates[v]
        if q <= 0.0:
            return math.inf, v
        u1 = _unif(self.key, self.ctr)
        u2 = _unif(self.key, self.ctr + 1)
        self.ctr += 2
        hold = -math.log(u1) / q
        lo = self.indptr[v]
        hi = self.indptr[v + 1]
        k = bisect_right(self.cumprob, u2, lo, hi - 1)
        return hold, self.indices[k]


def _lists(indptr, indices, cumprob, rates):
    return (
        [int(a) for a in indptr],
        [int(a) for a in indices],
        [float(a) for a in cumprob],
        [float(a) for a in rates],
    )


def walk_trace(indptr, indices, cumprob, rates, start, horizon, key):
    ip, ix, cp, rt = _lists(indptr, indices, cumprob, rates)
    w = _Walk(ip, ix, cp, rt, int(key))
    times = [0.0]
    verts = [int(start)]
    t = 0.0
    v = int(start)
    while True:
        hold, nxt = w.step(v)
        t = t + hold
        if not t <= horizon:
            break
        times.append(t)
        verts.append(nxt)
        v = nxt
    return np.asarray(times, dtype=np.float64), np.asarray(verts, dtype=np.int64)


def walk_positions(indptr, indices, cumprob, rates, start, times, base_key, first, count):
    ip, ix, cp, rt = _lists(indptr, indices, cumprob, rates)
    ts = [float(a) for a in times]
    m = len(ts)
    out = np.empty((count, m), dtype=np.int64)
    for p in range(count):
        w = _Walk(ip, ix, cp, rt, _pkey(int(base_key), first + p))
        v = int(start)
        t = 0.0
        j = 0
        while j < m:
            hold, nxt = w.step(v)
            tn = t + hold
            while j < m and ts[j] < tn:
                out[p, j] = v
                j += 1
            t = tn
            v = nxt
    return out


def walk_first_exit(indptr, indices, cumprob, rates, start, inside, horizon, base_key, first, count):
    ip, ix, cp, rt = _lists(indptr, indices, cumprob, rates)
    ins = [bool(a) for a in inside]
    tau = np.empty(count, dtype=np.float64)
    where = np.empty(count, dtype=np.int64)
    for p in range(count):
        v = int(start)
        if not ins[v]:
            tau[p] = 0.0
            where[p] = v
            continue
        w = _Walk(ip, ix, cp, rt, _pkey(int(base_key), first + p))
        t = 0.0
        while True:
            hold, nxt = w.step(v)
            t = t + hold
            if not t <= horizon:
                tau[p] = math.inf
                where[p] = -1
                break
            v = nxt
            if not ins[v]:
                tau[p] = t
                where[p] = v
                break
    return tau, where


def walk_sausage(indptr, indices, cumprob, rates, start, times, dil_indptr, dil_indices,
                 measure, base_key, first, count):
    ip, ix, cp, rt = _lists(indptr, indices, cumprob, rates)
    dp = [int(a) for a in dil_indptr]
    di = [int(a) for a in dil_indices]
    mu = [float(a) for a in measure]
    ts = [float(a) for a in times]
    m = len(ts)
    n = len(rt)
    seen = [-1] * n
    covered = [-1] * n
    out = np.empty((count, m), dtype=np.float64)
    for p in range(count):
        stamp = first + p
        w = _Walk(ip, ix, cp, rt, _pkey(int(base_key), stamp))
        v = int(start)
        mass = 0.0
        seen[v] = stamp
        for k in range(dp[v], dp[v + 1]):
            u = di[k]
            if covered[u] != stamp:
                covered[u] = stamp
                mass += mu[u]
        t = 0.0
        j = 0
        while j < m:
            hold, nxt = w.step(v)
            tn = t + hold
            while j < m and ts[j] < tn:
                out[p, j] = mass
                j += 1
            t = tn
            v = nxt
            if j < m and seen[v] != stamp:
                seen[v] = stamp
                for k in range(dp[v], dp[v + 1]):
                    u = di[k]
                    if covered[u] != stamp:
                        covered[u] = stamp
                        mass += mu[u]
    return out


def uniformized_log_sum(p_indptr, p_indices, p_data, drop, init, rate_time, k_max):
    """log of sum_k Pois(k; rate_time) * 1'P^k init, plus log of dropped mass.

    ``P`` is given in CSR with rows = targets.  The vector is renormalised
    every step and the scale carried in log space, so results far below
    the float range are representable.
    """
    import scipy.sparse as sp

    n = len(init)
    P = sp.csr_matrix((p_data, p_indices, p_indptr), shape=(n, n))
    v = np.array(init, dtype=np.float64)
    logscale = 0.0
    logacc = -math.inf
    logdrop = -math.inf
    logpois = -rate_time
    log_rt = math.log(rate_time) if rate_time > 0 else -math.inf
    for k in range(int(k_max) + 1):
        g = float(v.sum())
        if g <= 0.0:
            break
        term = logpois + logscale + math.log(g)
        logacc = _logaddexp(logacc, term)
        if k == k_max:
            break
        dd = float(drop @ v)
        if dd > 0.0:
            logdrop = _logaddexp(logdrop, logscale + math.log(dd))
        v = P @ v
        s = float(v.sum())
        if s <= 0.0:
            break
        v *= 1.0 / s
        logscale += math.log(s)
        logpois += log_rt - math.log(k + 1)
    return logacc, logdrop


def _logaddexp(a, b):
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))
