"""Moderate-deviation experiments: Monte Carlo tail estimation at speed
b_n^2, exact small-horizon enumeration oracles, the exact Gaussian
reference tail, and rate curves approaching -r^2 / (2 sigma^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from sapprox.engine import count_tail_hits, weighted_sums_over_signs
from sapprox.model import ProblemSpec, Rademacher
from sapprox.weights import h_norm

ENUMERATION_MAX_N = 22
_ENUM_CHUNK = 1 << 20


@dataclass(frozen=True)
class Schedule:
    """Deviation schedule: speed b_n = n^(1/(2(1+gamma))), grid of horizons,
    and the deviation level r."""

    gamma: float
    n_grid: tuple[int, ...]
    r: float

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r}")
        grid = tuple(self.n_grid)
        if not grid:
            raise ValueError("n_grid must not be empty")
        if any(n < 1 for n in grid):
            raise ValueError(f"horizons must be >= 1, got {grid}")
        if any(grid[i] >= grid[i + 1] for i in range(len(grid) - 1)):
            raise ValueError(f"n_grid must be strictly increasing, got {grid}")
        object.__setattr__(self, "n_grid", grid)

    def b(self, n: int) -> float:
        return float(n) ** (1.0 / (2.0 * (1.0 + self.gamma)))

    def limit_rate(self, sigma: float) -> float:
        return -self.r * self.r / (2.0 * sigma * sigma)


@dataclass(frozen=True)
class TailEstimate:
    """Monte Carlo estimate of P(h_n |statistic| > r b_n) with exact 95%
    binomial interval and the implied rate log(p_hat) / b_n^2.

    rate is -inf when no replica hit (distinct from any numeric rate);
    reference_rate is the exact Gaussian tail rate at the same (r, b_n).
    """

    n: int
    b_n: float
    threshold: float
    hits: int
    replicas: int
    p_hat: float
    ci_low: float
    ci_high: float
    rate: float
    reference_rate: float


def clopper_pearson(hits: int, total: int, confidence: float = 0.95) -> tuple[float, float]:
    """Exact two-sided binomial confidence interval for hits/total."""
    if not 0 <= hits <= total:
        raise ValueError(f"need 0 <= hits <= total, got {hits}/{total}")
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    alpha = 1.0 - confidence
    lo = 0.0 if hits == 0 else float(stats.beta.ppf(alpha / 2.0, hits, total - hits + 1))
    hi = 1.0 if hits == total else float(stats.beta.ppf(1.0 - alpha / 2.0, hits + 1, total - hits))
    return lo, hi


def binomial_band(p: float, total: int, confidence: float = 0.999) -> tuple[int, int]:
    """Central acceptance region on counts for Binomial(total, p)."""
    alpha = 1.0 - confidence
    lo = int(stats.binom.ppf(alpha / 2.0, total, p)) if p > 0 else 0
    hi = int(stats.binom.ppf(1.0 - alpha / 2.0, total, p)) if p < 1 else total
    return lo, hi


class GaussianReference(NamedTuple):
    tail: float
    rate: float


def gaussian_reference(r: float, b_n: float, sigma: float) -> GaussianReference:
    """Exact tail of the normalized statistic under Gaussian noise.

    By construction of h_n the normalized statistic is exactly
    N(0, sigma^2), so tail = 2 (1 - Phi(r b_n / sigma)); the rate uses the
    log survival function and stays finite far past float underflow.
    """
    if not (r > 0 and b_n > 0 and sigma > 0):
        raise ValueError("r, b_n and sigma must all be positive")
    z = r * b_n / sigma
    tail = 2.0 * float(stats.norm.sf(z))
    rate = (math.log(2.0) + float(stats.norm.logsf(z))) / (b_n * b_n)
    return GaussianReference(tail=tail, rate=rate)


def estimate_tail(
    target: str,
    spec: ProblemSpec,
    n: int,
    r: float,
    b_n: float,
    replicas: int,
    seed: int,
    workers: int = 1,
) -> TailEstimate:
    """Monte Carlo estimate of P(h_n |statistic| > r b_n).

    target is "recursion" (final deviation of the full recursion) or
    "weighted_sum".  The event is evaluated in raw deviation units against
    threshold = r b_n / h_n.  Deterministic given all arguments.
    """
    spec.require_mdp_regime()
    if replicas < 1:
        raise ValueError(f"replicas must be >= 1, got {replicas}")
    if r < 0 or not b_n > 0:
        raise ValueError(f"need r >= 0 and b_n > 0, got r={r}, b_n={b_n}")
    h = h_norm(spec.b, spec.c, n)
    threshold = r * b_n / h
    result = count_tail_hits(
        spec, target, n, seed, replicas, threshold, inclusive=False, workers=workers
    )
    p_hat = result.hits / replicas
    ci_low, ci_high = clopper_pearson(result.hits, replicas)
    rate = -math.inf if result.hits == 0 else math.log(p_hat) / (b_n * b_n)
    reference = gaussian_reference(r, b_n, spec.noise.sigma) if r > 0 else GaussianReference(1.0, 0.0)
    return TailEstimate(
        n=n,
        b_n=b_n,
        threshold=threshold,
        hits=result.hits,
        replicas=replicas,
        p_hat=p_hat,
        ci_low=ci_low,
        ci_high=ci_high,
        rate=rate,
        reference_rate=reference.rate,
    )


def _sign_matrix(lo: int, hi: int, n_terms: int) -> np.ndarray:
    """Rows lo..hi-1 of the full +-1 pattern table with n_terms columns."""
    idx = np.arange(lo, hi, dtype=np.uint64)[:, None]
    bits = (idx >> np.arange(n_terms, dtype=np.uint64)[None, :]) & np.uint64(1)
    return 2.0 * bits.astype(np.float64) - 1.0


def enumerate_signed_sum_tail(weights: Sequence[float], threshold: float) -> Fraction:
    """Exact P(|sum_k w_k xi_k| > t) for independent fair signs xi_k.

    Enumerates all 2^m sign patterns; the count over 2^m is returned as an
    exact dyadic fraction.
    """
    w = np.asarray(weights, dtype=np.float64)
    m = len(w)
    if m > ENUMERATION_MAX_N + 1:
        raise ValueError(f"too many terms for enumeration: {m}")
    total = 1 << m
    hits = 0
    for lo in range(0, total, _ENUM_CHUNK):
        hi = min(lo + _ENUM_CHUNK, total)
        s = _sign_matrix(lo, hi, m) @ w
        hits += int(np.count_nonzero(np.abs(s) > threshold))
    return Fraction(hits, total)


def exact_tail_enumeration(spec: ProblemSpec, n: int, threshold: float) -> Fraction:
    """Exact P(|weighted sum| > threshold) for Rademacher noise by full
    enumeration of the 2^(n+1) sign patterns.

    The statistic for each pattern is evaluated by the same forward
    recurrence as the Monte Carlo path, so enumeration and estimate agree
    at float level, not just in distribution.  Requires n <= 22.
    """
    if not isinstance(spec.noise, Rademacher):
        raise ValueError("enumeration oracle requires Rademacher noise")
    if n > ENUMERATION_MAX_N:
        raise ValueError(f"n={n} too large for enumeration (max {ENUMERATION_MAX_N})")
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    spec.require_mdp_regime()
    total = 1 << (n + 1)
    hits = 0
    for lo in range(0, total, _ENUM_CHUNK):
        hi = min(lo + _ENUM_CHUNK, total)
        signs = _sign_matrix(lo, hi, n + 1)
        s = weighted_sums_over_signs(spec, n, signs)
        hits += int(np.count_nonzero(np.abs(s) > threshold))
    return Fraction(hits, total)


@dataclass(frozen=True)
class RateCurve:
    points: tuple[TailEstimate, ...]
    limit_rate: float


def rate_curve(
    target: str,
    spec: ProblemSpec,
    schedule: Schedule,
    replicas: int,
    seed: int,
    workers: int = 1,
) -> RateCurve:
    """One TailEstimate per grid horizon plus the limit -r^2/(2 sigma^2).

    -inf rates (zero hits) are reported as such, never dropped.
    """
    points = tuple(
        estimate_tail(
            target, spec, n, schedule.r, schedule.b(n), replicas, seed, workers=workers
        )
        for n in schedule.n_grid
    )
    return RateCurve(points=points, limit_rate=schedule.limit_rate(spec.noise.sigma))
