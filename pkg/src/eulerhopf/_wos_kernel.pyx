# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled walk-on-spheres kernel for the built-in shapes.

Mirrors ``_wos_py.walk_exits`` walk for walk, using the same counter-based
generator (see ``_rng``).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, cos, sin, fabs, M_PI
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t C1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t C2 = 0x94D049BB133111EBULL
cdef int SLOTS = 64
cdef double TWO53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = z + GOLDEN
    z = (z ^ (z >> 30)) * C1
    z = (z ^ (z >> 27)) * C2
    return z ^ (z >> 31)


cdef inline double uniform(uint64_t key, int64_t step, int slot) noexcept nogil:
    cdef uint64_t ctr = <uint64_t>(step * SLOTS + slot)
    cdef uint64_t bits = mix64(key ^ ctr)
    return (<double>(bits >> 11) + 0.5) * TWO53


cdef double sdf(int kind, const double* p, const double* x, int n) noexcept nogil:
    cdef int k
    cdef double s = 0.0, t, m, q, qmax, outside = 0.0
    if kind == 0:
        for k in range(n):
            t = x[k] - p[k]
            s += t * t
        return sqrt(s) - p[n]
    if kind == 1:
        m = p[n]
        for k in range(n):
            t = (x[k] - p[k]) / p[n + k]
            s += t * t
            if p[n + k] < m:
                m = p[n + k]
        return (sqrt(s) - 1.0) * m
    qmax = -1e300
    for k in range(n):
        q = fabs(x[k] - p[k]) - (p[n + k] - p[2 * n])
        if q > qmax:
            qmax = q
        if q > 0:
            outside += q * q
    return sqrt(outside) + (qmax if qmax < 0 else 0.0) - p[2 * n]


cdef void project(int kind, const double* p, double* x, int n) noexcept nogil:
    cdef int k, kmax = 0
    cdef double s = 0.0, t, q, qmax = -1e300, nq = 0.0, d, sg
    if kind == 0:
        for k in range(n):
            t = x[k] - p[k]
            s += t * t
        s = sqrt(s)
        if s <= 0:
            s = 1.0
        for k in range(n):
            x[k] = p[k] + p[n] * (x[k] - p[k]) / s
        return
    if kind == 1:
        for k in range(n):
            t = (x[k] - p[k]) / p[n + k]
            s += t * t
        s = sqrt(s)
        if s <= 0:
            s = 1.0
        for k in range(n):
            x[k] = p[k] + (x[k] - p[k]) / s
        return
    d = sdf(kind, p, x, n)
    for k in range(n):
        q = fabs(x[k] - p[k]) - (p[n + k] - p[2 * n])
        if q > qmax:
            qmax = q
            kmax = k
        if q > 0:
            nq += q * q
    nq = sqrt(nq)
    for k in range(n):
        sg = 1.0 if x[k] - p[k] >= 0 else -1.0
        if nq > 0:
            q = fabs(x[k] - p[k]) - (p[n + k] - p[2 * n])
            if q > 0:
                x[k] -= d * sg * q / nq
        elif k == kmax:
            x[k] -= d * sg


def walk_exits(int kind, params, start, uint64_t stream, int64_t first, int64_t count,
               double shell, int64_t max_steps, bint antithetic=True):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] par = np.ascontiguousarray(params, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x0 = np.ascontiguousarray(start, dtype=np.float64)
    cdef int n = x0.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((count, n))
    cdef cnp.ndarray[cnp.int64_t, ndim=1] steps = np.empty(count, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g = np.empty(n + 1)
    cdef double* pp = &par[0]
    cdef double* gp = &g[0]
    cdef double* xp
    cdef int64_t w, idx, s, pair
    cdef int k
    cdef uint64_t key
    cdef double d, sign, r, th, u1, u2, norm
    with nogil:
        for w in range(count):
            idx = first + w
            xp = &out[w, 0]
            for k in range(n):
                xp[k] = x0[k]
            if antithetic:
                pair = idx // 2
                sign = -1.0 if idx % 2 == 1 else 1.0
            else:
                pair = idx
                sign = 1.0
            key = mix64(stream ^ mix64(<uint64_t>pair))
            s = 0
            while s < max_steps:
                d = -sdf(kind, pp, xp, n)
                if d < shell:
                    break
                k = 0
                while k < n:
                    u1 = uniform(key, s, k)
                    u2 = uniform(key, s, k + 1)
                    r = sqrt(-2.0 * log(u1))
                    th = 2.0 * M_PI * u2
                    gp[k] = r * cos(th)
                    gp[k + 1] = r * sin(th)
                    k += 2
                norm = 0.0
                for k in range(n):
                    norm += gp[k] * gp[k]
                norm = sqrt(norm)
                for k in range(n):
                    xp[k] += d * sign * gp[k] / norm
                s += 1
            steps[w] = s
            project(kind, pp, xp, n)
    return out, steps, steps >= max_steps
