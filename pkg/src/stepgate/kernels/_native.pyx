# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: digamma/trigamma and the Monte Carlo product sampler.

Self-contained RNG (splitmix64-seeded xoshiro256**, Marsaglia-Tsang gamma)
so the hot loop never crosses back into Python. Streams differ from the
NumPy fallback; determinism holds per kernel backend.
"""

from libc.math cimport log, sqrt, cbrt, pow as cpow
from libc.stdint cimport uint64_t

import numpy as np

from ..errors import DomainError

cdef double _SHIFT_THRESHOLD = 6.0

cdef double[6] _DIGAMMA_COEFFS = [
    1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0,
    -1.0 / 240.0, 1.0 / 132.0, -691.0 / 32760.0,
]

cdef double[6] _TRIGAMMA_COEFFS = [
    1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0,
    -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0,
]


cdef double _digamma(double x) nogil:
    cdef double acc = 0.0, inv2, series, power
    cdef int i
    while x < _SHIFT_THRESHOLD:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    power = inv2
    for i in range(6):
        series -= _DIGAMMA_COEFFS[i] * power
        power *= inv2
    return acc + log(x) - 0.5 / x + series


cdef double _trigamma(double x) nogil:
    cdef double acc = 0.0, inv, inv2, series, power
    cdef int i
    while x < _SHIFT_THRESHOLD:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    power = inv2 * inv
    for i in range(6):
        series += _TRIGAMMA_COEFFS[i] * power
        power *= inv2
    return acc + inv + 0.5 * inv2 + series


def digamma(double x):
    """First log-gamma derivative for x > 0, absolute error <= 1e-10."""
    if not x > 0.0:
        raise DomainError(f"digamma requires x > 0, got {x}")
    return _digamma(x)


def trigamma(double x):
    """Second log-gamma derivative for x > 0, absolute error <= 1e-10."""
    if not x > 0.0:
        raise DomainError(f"trigamma requires x > 0, got {x}")
    return _trigamma(x)


# ---------------------------------------------------------------------------
# RNG: xoshiro256** seeded via splitmix64.
# ---------------------------------------------------------------------------

ctypedef struct RngState:
    uint64_t s0
    uint64_t s1
    uint64_t s2
    uint64_t s3


cdef inline uint64_t _splitmix64(uint64_t* state) nogil:
    cdef uint64_t z
    state[0] += <uint64_t>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline void _seed_rng(RngState* rng, uint64_t seed) nogil:
    cdef uint64_t sm = seed
    rng.s0 = _splitmix64(&sm)
    rng.s1 = _splitmix64(&sm)
    rng.s2 = _splitmix64(&sm)
    rng.s3 = _splitmix64(&sm)


cdef inline uint64_t _rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t _next_u64(RngState* rng) nogil:
    cdef uint64_t result = _rotl(rng.s1 * 5, 7) * 9
    cdef uint64_t t = rng.s1 << 17
    rng.s2 ^= rng.s0
    rng.s3 ^= rng.s1
    rng.s1 ^= rng.s2
    rng.s0 ^= rng.s3
    rng.s2 ^= t
    rng.s3 = _rotl(rng.s3, 45)
    return result


cdef inline double _uniform(RngState* rng) nogil:
    # 53-bit mantissa in (0, 1); zero is rejected so log() stays finite.
    cdef double value = 0.0
    while value == 0.0:
        value = (_next_u64(rng) >> 11) * (1.0 / 9007199254740992.0)
    return value


cdef double _normal(RngState* rng, double* spare, bint* has_spare) nogil:
    # Marsaglia polar method with a cached second variate.
    cdef double u, v, s, factor
    if has_spare[0]:
        has_spare[0] = False
        return spare[0]
    while True:
        u = 2.0 * _uniform(rng) - 1.0
        v = 2.0 * _uniform(rng) - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            break
    factor = sqrt(-2.0 * log(s) / s)
    spare[0] = v * factor
    has_spare[0] = True
    return u * factor


cdef double _gamma(RngState* rng, double shape, double* spare, bint* has_spare) nogil:
    # Marsaglia-Tsang squeeze; shapes below one boosted via Gamma(a+1) * U^(1/a).
    cdef double boost = 1.0, d, c, x, v, uni
    if shape < 1.0:
        boost = cpow(_uniform(rng), 1.0 / shape)
        shape += 1.0
    d = shape - 1.0 / 3.0
    c = 1.0 / sqrt(9.0 * d)
    while True:
        x = _normal(rng, spare, has_spare)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        uni = _uniform(rng)
        if uni < 1.0 - 0.0331 * x * x * x * x:
            break
        if log(uni) < 0.5 * x * x + d * (1.0 - v + log(v)):
            break
    return boost * d * v


def mc_tsr_products(double u, double l, int k, long n, object seed):
    """Draw ``n`` trajectory success products, each over ``k`` Beta(u, l) steps."""
    if u <= 0 or l <= 0:
        raise DomainError("Beta shapes must be positive")
    if k < 1 or n < 1:
        raise DomainError("k and n must be >= 1")
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef RngState rng
    cdef double spare = 0.0
    cdef bint has_spare = False
    cdef double product, gu, gl
    cdef long i
    cdef int j
    _seed_rng(&rng, <uint64_t>(<unsigned long long>(int(seed) & 0xFFFFFFFFFFFFFFFF)))
    with nogil:
        for i in range(n):
            product = 1.0
            for j in range(k):
                gu = _gamma(&rng, u, &spare, &has_spare)
                gl = _gamma(&rng, l, &spare, &has_spare)
                product *= gu / (gu + gl)
            out[i] = product
    return out_arr
