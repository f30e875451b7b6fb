"""Pure-Python/NumPy kernels, used when the compiled core is unavailable.

digamma/trigamma follow the classic scheme: upward recurrence until the
argument reaches 6, then the Bernoulli asymptotic series, which keeps the
absolute error below 1e-10 over the whole positive axis.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DomainError

_SHIFT_THRESHOLD = 6.0

# Bernoulli-series coefficients: psi(x) ~ ln x - 1/(2x) - sum c_n / x^(2n)
_DIGAMMA_COEFFS = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
)

# psi'(x) ~ 1/x + 1/(2x^2) + sum c_n / x^(2n+1)
_TRIGAMMA_COEFFS = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
)


def digamma(x: float) -> float:
    """First log-gamma derivative for x > 0, absolute error <= 1e-10."""
    if not (x > 0.0) or math.isnan(x):
        raise DomainError(f"digamma requires x > 0, got {x}")
    acc = 0.0
    while x < _SHIFT_THRESHOLD:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    power = inv2
    for c in _DIGAMMA_COEFFS:
        series -= c * power
        power *= inv2
    return acc + math.log(x) - 0.5 / x + series


def trigamma(x: float) -> float:
    """Second log-gamma derivative for x > 0, absolute error <= 1e-10."""
    if not (x > 0.0) or math.isnan(x):
        raise DomainError(f"trigamma requires x > 0, got {x}")
    acc = 0.0
    while x < _SHIFT_THRESHOLD:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    power = inv2 * inv
    for c in _TRIGAMMA_COEFFS:
        series += c * power
        power *= inv2
    return acc + inv + 0.5 * inv2 + series


_CHUNK = 1 << 18


def mc_tsr_products(u: float, l: float, k: int, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` trajectory success products, each over ``k`` Beta(u, l) steps.

    Beta variates come from two independent Gamma draws normalized, so the
    compiled kernel and this fallback implement the same sampling scheme.
    Deterministic for a given seed (per kernel backend).
    """
    if u <= 0 or l <= 0:
        raise DomainError("Beta shapes must be positive")
    if k < 1 or n < 1:
        raise DomainError("k and n must be >= 1")
    rng = np.random.default_rng(seed)
    out = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        size = (stop - start, k)
        g_u = rng.standard_gamma(u, size=size)
        g_l = rng.standard_gamma(l, size=size)
        np.prod(g_u / (g_u + g_l), axis=1, out=out[start:stop])
    return out
