# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled walk and uniformisation kernels.

Must stay operation-for-operation identical to ``_fallback.py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, log1p, exp, INFINITY
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

NAME = "cython"

cdef uint64_t _GAMMA = 0x9E3779B97F4A7C15ULL
cdef double _INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _unif(uint64_t key, uint64_t ctr) noexcept nogil:
    cdef uint64_t z = _mix(key + (ctr + 1) * _GAMMA)
    return (<double>(z >> 11) + 0.5) * _INV53


cdef inline uint64_t _pkey(uint64_t base, uint64_t i) noexcept nogil:
    return _mix(base + (i + 1) * _GAMMA)


cdef inline int64_t _pick(const int64_t[::1] indptr, const int64_t[::1] indices,
                          const double[::1] cumprob, int64_t v, double u) noexcept nogil:
    # first k in [lo, hi-1) with cumprob[k] > u, else hi-1
    cdef int64_t lo = indptr[v]
    cdef int64_t hi = indptr[v + 1] - 1
    cdef int64_t mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if u < cumprob[mid]:
            hi = mid
        else:
            lo = mid + 1
    return indices[lo]


cdef inline double _step(const int64_t[::1] indptr, const int64_t[::1] indices,
                         const double[::1] cumprob, const double[::1] rates,
                         uint64_t key, uint64_t* ctr, int64_t v, int64_t* nxt) noexcept nogil:
    cdef double q = rates[v]
    cdef double u1, u2
    if q <= 0.0:
        nxt[0] = v
        return INFINITY
    u1 = _unif(key, ctr[0])
    u2 = _unif(key, ctr[0] + 1)
    ctr[0] += 2
    nxt[0] = _pick(indptr, indices, cumprob, v, u2)
    return -log(u1) / q


def walk_trace(const int64_t[::1] indptr, const int64_t[::1] indices,
               const double[::1] cumprob, const double[::1] rates,
               int64_t start, double horizon, uint64_t key):
    cdef uint64_t ctr = 0
    cdef double t = 0.0, hold
    cdef int64_t v = start, nxt
    times = [0.0]
    verts = [start]
    while True:
        hold = _step(indptr, indices, cumprob, rates, key, &ctr, v, &nxt)
        t = t + hold
        if not t <= horizon:
            break
        times.append(t)
        verts.append(nxt)
        v = nxt
    return np.asarray(times, dtype=np.float64), np.asarray(verts, dtype=np.int64)


def walk_positions(const int64_t[::1] indptr, const int64_t[::1] indices,
                   const double[::1] cumprob, const double[::1] rates,
                   int64_t start, const double[::1] times, uint64_t base_key,
                   int64_t first, int64_t count):
    cdef Py_ssize_t m = times.shape[0]
    out_arr = np.empty((count, m), dtype=np.int64)
    cdef int64_t[:, ::1] out = out_arr
    cdef int64_t p, v, nxt
    cdef Py_ssize_t j
    cdef uint64_t key, ctr
    cdef double t, tn
    with nogil:
        for p in range(count):
            key = _pkey(base_key, <uint64_t>(first + p))
            ctr = 0
            v = start
            t = 0.0
            j = 0
            while j < m:
                tn = t + _step(indptr, indices, cumprob, rates, key, &ctr, v, &nxt)
                while j < m and times[j] < tn:
                    out[p, j] = v
                    j += 1
                t = tn
                v = nxt
    return out_arr


def walk_first_exit(const int64_t[::1] indptr, const int64_t[::1] indices,
                    const double[::1] cumprob, const double[::1] rates,
                    int64_t start, const cnp.uint8_t[::1] inside, double horizon,
                    uint64_t base_key, int64_t first, int64_t count):
    tau_arr = np.empty(count, dtype=np.float64)
    where_arr = np.empty(count, dtype=np.int64)
    cdef double[::1] tau = tau_arr
    cdef int64_t[::1] where = where_arr
    cdef int64_t p, v, nxt
    cdef uint64_t key, ctr
    cdef double t
    with nogil:
        for p in range(count):
            v = start
            if not inside[v]:
                tau[p] = 0.0
                where[p] = v
                continue
            key = _pkey(base_key, <uint64_t>(first + p))
            ctr = 0
            t = 0.0
            while True:
                t = t + _step(indptr, indices, cumprob, rates, key, &ctr, v, &nxt)
                if not t <= horizon:
                    tau[p] = INFINITY
                    where[p] = -1
                    break
                v = nxt
                if not inside[v]:
                    tau[p] = t
                    where[p] = v
                    break
    return tau_arr, where_arr


def walk_sausage(const int64_t[::1] indptr, const int64_t[::1] indices,
                 const double[::1] cumprob, const double[::1] rates,
                 int64_t start, const double[::1] times,
                 const int64_t[::1] dil_indptr, const int64_t[::1] dil_indices,
                 const double[::1] measure, uint64_t base_key,
                 int64_t first, int64_t count):
    cdef Py_ssize_t m = times.shape[0]
    cdef Py_ssize_t n = rates.shape[0]
    out_arr = np.empty((count, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    seen_arr = np.full(n, -1, dtype=np.int64)
    covered_arr = np.full(n, -1, dtype=np.int64)
    cdef int64_t[::1] seen = seen_arr
    cdef int64_t[::1] covered = covered_arr
    cdef int64_t p, v, nxt, u, k, stamp
    cdef Py_ssize_t j
    cdef uint64_t key, ctr
    cdef double t, tn, mass
    with nogil:
        for p in range(count):
            stamp = first + p
            key = _pkey(base_key, <uint64_t>stamp)
            ctr = 0
            v = start
            mass = 0.0
            seen[v] = stamp
            for k in range(dil_indptr[v], dil_indptr[v + 1]):
                u = dil_indices[k]
                if covered[u] != stamp:
                    covered[u] = stamp
                    mass += measure[u]
            t = 0.0
            j = 0
            while j < m:
                tn = t + _step(indptr, indices, cumprob, rates, key, &ctr, v, &nxt)
                while j < m and times[j] < tn:
                    out[p, j] = mass
                    j += 1
                t = tn
                v = nxt
                if j < m and seen[v] != stamp:
                    seen[v] = stamp
                    for k in range(dil_indptr[v], dil_indptr[v + 1]):
                        u = dil_indices[k]
                        if covered[u] != stamp:
                            covered[u] = stamp
                            mass += measure[u]
    return out_arr


cdef inline double _logaddexp(double a, double b) noexcept nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


def uniformized_log_sum(const int64_t[::1] p_indptr, const int64_t[::1] p_indices,
                        const double[::1] p_data, const double[::1] drop,
                        const double[::1] init, double rate_time, int64_t k_max):
    cdef Py_ssize_t n = init.shape[0]
    buf_arr = np.zeros((2, max(n, 1)), dtype=np.float64)
    buf_arr[0, :n] = init
    cdef double[:, ::1] buf = buf_arr
    cdef double* cur = &buf[0, 0]
    cdef double* nxt = &buf[1, 0]
    cdef double* tmp
    cdef const int64_t* ip = &p_indptr[0]
    cdef const int64_t* ix = &p_indices[0] if p_indices.shape[0] > 0 else NULL
    cdef const double* pd = &p_data[0] if p_data.shape[0] > 0 else NULL
    cdef const double* dr = &drop[0] if n > 0 else NULL
    cdef double logscale = 0.0, logacc = -INFINITY, logdrop = -INFINITY
    cdef double logpois = -rate_time
    cdef double log_rt = log(rate_time) if rate_time > 0 else -INFINITY
    cdef double g, dd, s, acc, inv
    cdef int64_t k, i, e
    with nogil:
        for k in range(k_max + 1):
            g = 0.0
            dd = 0.0
            for i in range(n):
                g += cur[i]
                dd += dr[i] * cur[i]
            if g <= 0.0:
                break
            logacc = _logaddexp(logacc, logpois + logscale + log(g))
            if k == k_max:
                break
            if dd > 0.0:
                logdrop = _logaddexp(logdrop, logscale + log(dd))
            s = 0.0
            for i in range(n):
                acc = 0.0
                for e in range(ip[i], ip[i + 1]):
                    acc += pd[e] * cur[ix[e]]
                nxt[i] = acc
                s += acc
            if s <= 0.0:
                break
            tmp = cur
            cur = nxt
            nxt = tmp
            inv = 1.0 / s
            for i in range(n):
                cur[i] *= inv
            logscale += log(s)
            logpois += log_rt - log(<double>(k + 1))
    return logacc, logdrop
