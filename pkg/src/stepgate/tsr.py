"""Statistical model of why step-level errors collapse task success.

A task of k steps succeeds only if every step does, so with step success
rates drawn i.i.d. from Beta(u, l) the task success rate is the product
of k Beta variates. Its log is a sum of k i.i.d. terms with

    mu      = psi(u) - psi(u + l)
    sigma^2 = psi'(u) - psi'(u + l)

giving the LogNormal approximation for a single task and, via the CLT over
N independent tasks, a Normal for the averaged rate with variance shrinking
as 1/N. Monte Carlo simulation validates both against exact product moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .kernels import BACKEND, digamma, mc_tsr_products, trigamma

__all__ = [
    "BetaParams",
    "TsrScenario",
    "LogNormalTsr",
    "NormalTsrAvg",
    "SampleStats",
    "McSummary",
    "beta_log_moments",
    "lognormal_tsr",
    "tsr_avg_normal",
    "simulate_tsr_mc",
    "tsr_bounds",
    "ks_statistic",
    "digamma",
    "trigamma",
]

HISTOGRAM_BINS = 100


@dataclass(frozen=True, slots=True)
class BetaParams:
    """Shape parameters of the per-step success-rate distribution."""

    u: float
    l: float

    def __post_init__(self) -> None:
        if not (self.u > 0 and self.l > 0):
            raise DomainError("Beta shapes must be strictly positive")

    @property
    def mean(self) -> float:
        return self.u / (self.u + self.l)

    @property
    def variance(self) -> float:
        s = self.u + self.l
        return self.u * self.l / (s * s * (s + 1.0))


@dataclass(frozen=True, slots=True)
class TsrScenario:
    """Deterministic task profile: k steps of which delta are complex.

    ``m``, ``q``, ``p`` are the per-step success rates of single (routine),
    complex, and interactive steps respectively.
    """

    k: int
    n_traj: int
    delta: int
    m: float
    q: float
    p: float

    def __post_init__(self) -> None:
        if self.k < 1:
            raise DomainError("k must be >= 1")
        if self.n_traj < 1:
            raise DomainError("n_traj must be >= 1")
        if not (0 <= self.delta <= self.k):
            raise DomainError("delta must lie in [0, k]")
        for name in ("m", "q", "p"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise DomainError(f"{name} must lie in [0, 1]")


def beta_log_moments(b: BetaParams) -> tuple[float, float]:
    """Mean and variance of ln(SR) for SR ~ Beta(u, l)."""
    mu = digamma(b.u) - digamma(b.u + b.l)
    sigma2 = trigamma(b.u) - trigamma(b.u + b.l)
    return mu, sigma2


@dataclass(frozen=True, slots=True)
class LogNormalTsr:
    """Single-task success-rate approximation: ln(TSR) ~ N(k*mu, k*sigma^2)."""

    log_mean: float
    log_var: float
    mean: float
    var: float

    def cdf(self, x: float) -> float:
        if x <= 0.0:
            return 0.0
        z = (math.log(x) - self.log_mean) / math.sqrt(2.0 * self.log_var)
        return 0.5 * (1.0 + math.erf(z))


def lognormal_tsr(b: BetaParams, k: int) -> LogNormalTsr:
    """LogNormal parameters of the k-step task success rate."""
    if k < 1:
        raise DomainError("k must be >= 1")
    mu, sigma2 = beta_log_moments(b)
    log_mean = k * mu
    log_var = k * sigma2
    mean = math.exp(log_mean + log_var / 2.0)
    var = math.exp(2.0 * log_mean + log_var) * (math.exp(log_var) - 1.0)
    return LogNormalTsr(log_mean=log_mean, log_var=log_var, mean=mean, var=var)


@dataclass(frozen=True, slots=True)
class NormalTsrAvg:
    """CLT approximation of the success rate averaged over n tasks."""

    mean: float
    var: float


def tsr_avg_normal(b: BetaParams, k: int, n: int) -> NormalTsrAvg:
    """Normal parameters of the n-task average; variance scales as 1/n."""
    if n < 1:
        raise DomainError("n must be >= 1")
    single = lognormal_tsr(b, k)
    return NormalTsrAvg(mean=single.mean, var=single.var / n)


@dataclass(frozen=True, slots=True)
class SampleStats:
    """Summary of one Monte Carlo sample set."""

    count: int
    mean: float
    var: float
    std_err: float
    quantiles: dict[str, float] = field(default_factory=dict)
    histogram: tuple[int, ...] = ()


@dataclass(frozen=True, slots=True)
class McSummary:
    """Monte Carlo picture of per-task success rates and their average."""

    u: float
    l: float
    k: int
    n_traj: int
    trials: int
    seed: int
    backend: str
    tsr: SampleStats
    tsr_avg: SampleStats


def _trial_seed(seed: int, trial: int) -> int:
    """Stable 64-bit substream id; independent of trial execution order."""
    x = (seed ^ (trial + 1) * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & 0xFFFFFFFFFFFFFFFF
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def _sample_stats(values: np.ndarray, histogram: bool = True) -> SampleStats:
    n = int(values.size)
    mean = float(values.mean())
    var = float(values.var(ddof=1)) if n > 1 else 0.0
    qs = np.quantile(values, [0.05, 0.25, 0.5, 0.75, 0.95])
    hist: tuple[int, ...] = ()
    if histogram:
        hist = tuple(int(c) for c in np.histogram(values, bins=HISTOGRAM_BINS, range=(0.0, 1.0))[0])
    return SampleStats(
        count=n,
        mean=mean,
        var=var,
        std_err=math.sqrt(var / n) if n > 1 else 0.0,
        quantiles={
            "p05": float(qs[0]),
            "p25": float(qs[1]),
            "p50": float(qs[2]),
            "p75": float(qs[3]),
            "p95": float(qs[4]),
        },
        histogram=hist,
    )


def simulate_tsr_mc(b: BetaParams, k: int, n_traj: int, trials: int, seed: int) -> McSummary:
    """Simulate ``trials`` batches of ``n_traj`` k-step tasks.

    Each task's success rate is the product of k i.i.d. Beta(u, l) step
    rates; each trial also records the batch average. Per-trial substreams
    are derived from the seed, so results do not depend on scheduling.
    """
    if k < 1:
        raise DomainError("k must be >= 1")
    if n_traj < 1 or trials < 1:
        raise DomainError("n_traj and trials must be >= 1")
    all_tsr = np.empty(trials * n_traj, dtype=np.float64)
    averages = np.empty(trials, dtype=np.float64)
    for trial in range(trials):
        products = mc_tsr_products(b.u, b.l, k, n_traj, _trial_seed(seed, trial))
        all_tsr[trial * n_traj:(trial + 1) * n_traj] = products
        averages[trial] = products.mean()
    return McSummary(
        u=b.u,
        l=b.l,
        k=k,
        n_traj=n_traj,
        trials=trials,
        seed=seed,
        backend=BACKEND,
        tsr=_sample_stats(all_tsr),
        tsr_avg=_sample_stats(averages, histogram=trials >= 2),
    )


def tsr_bounds(s: TsrScenario, interpretation: str = "literal") -> tuple[float, float]:
    """Deterministic sandwich for a task with ``delta`` complex steps.

    The ``literal`` reading keeps the complex-step count delta as the
    exponent of m: (m^delta * q^(k-delta), m^delta * p^(k-delta)). The
    ``prose`` reading puts delta on the complex/interactive rates instead:
    (q^delta * m^(k-delta), p^delta * m^(k-delta)).
    """
    if interpretation == "literal":
        lower = s.m ** s.delta * s.q ** (s.k - s.delta)
        upper = s.m ** s.delta * s.p ** (s.k - s.delta)
    elif interpretation == "prose":
        lower = s.q ** s.delta * s.m ** (s.k - s.delta)
        upper = s.p ** s.delta * s.m ** (s.k - s.delta)
    else:
        raise DomainError(f"unknown interpretation {interpretation!r}")
    return lower, upper


def ks_statistic(samples: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov distance between a sample and an analytic CDF."""
    ordered = np.sort(np.asarray(samples, dtype=np.float64))
    n = ordered.size
    if n == 0:
        raise DomainError("KS statistic needs at least one sample")
    analytic = np.array([cdf(x) for x in ordered])
    upper = np.max(np.arange(1, n + 1) / n - analytic)
    lower = np.max(analytic - np.arange(0, n) / n)
    return float(max(upper, lower))
