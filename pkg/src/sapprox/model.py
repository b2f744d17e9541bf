"""Problem definitions: drift functions with a unique stable root and
bounded noise sequences with exact conditional moments.

Drifts satisfy, for all x,

    K1 |x - x*| <= |g(x)| <= K2 |x - x*|,   |g''(x)| <= Ka,
    (x - x*) g(x) <= 0,   g(x*) = 0,   g'(x*) < 0.

Noise models emit two-point distributions whose conditional mean is exactly
0 and conditional second moment exactly sigma^2 given the past, with every
value bounded by Ku.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np


@dataclass(frozen=True)
class LinearDrift:
    """g(x) = alpha1 * (x - x_star) with alpha1 < 0.

    The boundary case with zero curvature: K1 = K2 = |alpha1|, Ka = 0, so
    the Taylor remainder vanishes identically.
    """

    alpha1: float
    x_star: float = 0.0

    def __post_init__(self) -> None:
        if not self.alpha1 < 0:
            raise ValueError(f"alpha1 must be negative, got {self.alpha1}")

    @property
    def gprime_star(self) -> float:
        return self.alpha1

    @property
    def K1(self) -> float:
        return abs(self.alpha1)

    @property
    def K2(self) -> float:
        return abs(self.alpha1)

    @property
    def Ka(self) -> float:
        return 0.0

    def __call__(self, x):
        return self.alpha1 * (x - self.x_star)

    def describe(self) -> dict:
        return {"kind": "linear", "alpha1": self.alpha1, "x_star": self.x_star}


@dataclass(frozen=True)
class SineLinearDrift:
    """g(x) = -c1 * u - c2 * sin(u) with u = x - x_star and c1 > c2 > 0.

    Globally |sin u| <= |u| gives K1 = c1 - c2 and K2 = c1 + c2, while
    g''(u) = c2 sin(u) gives Ka = c2; the slope at the root is -(c1 + c2).
    """

    c1: float
    c2: float
    x_star: float = 0.0

    def __post_init__(self) -> None:
        if not (self.c1 > self.c2 > 0):
            raise ValueError(
                f"need c1 > c2 > 0, got c1={self.c1}, c2={self.c2}"
            )

    @property
    def gprime_star(self) -> float:
        return -(self.c1 + self.c2)

    @property
    def K1(self) -> float:
        return self.c1 - self.c2

    @property
    def K2(self) -> float:
        return self.c1 + self.c2

    @property
    def Ka(self) -> float:
        return self.c2

    def __call__(self, x):
        u = x - self.x_star
        return -self.c1 * u - self.c2 * np.sin(u)

    def describe(self) -> dict:
        return {
            "kind": "sine_linear",
            "c1": self.c1,
            "c2": self.c2,
            "x_star": self.x_star,
        }


DriftFunction = Union[LinearDrift, SineLinearDrift]


def eval_g(drift: DriftFunction, x):
    """Evaluate the drift at x (scalar or array)."""
    y = drift(x)
    if isinstance(x, np.ndarray):
        return y
    return float(y)


@dataclass(frozen=True)
class DriftViolation:
    check: str
    x: float
    detail: str


@dataclass(frozen=True)
class DriftValidationReport:
    passed: bool
    violations: tuple[DriftViolation, ...]


def validate_drift(
    drift: DriftFunction, grid_halfwidth: float, grid_points: int
) -> DriftValidationReport:
    """Check the drift conditions numerically on a uniform grid around x*.

    Verifies K1|x-x*| <= |g(x)| <= K2|x-x*|, the curvature bound
    |g''(x)| <= Ka (central second difference with step 1e-4, absolute
    tolerance 1e-4), and the push-back sign (x-x*) g(x) <= 0.  Violations
    are reported with the offending x, never raised.
    """
    if grid_points < 3:
        raise ValueError(f"grid_points must be >= 3, got {grid_points}")
    if not grid_halfwidth > 0:
        raise ValueError(f"grid_halfwidth must be positive, got {grid_halfwidth}")
    xs = drift.x_star + np.linspace(-grid_halfwidth, grid_halfwidth, grid_points)
    u = xs - drift.x_star
    g = eval_g(drift, xs)
    absg = np.abs(g)
    absu = np.abs(u)
    # slack for float rounding only; the inequalities themselves are exact
    slack = 1e-12 * np.maximum(1.0, absu)

    violations: list[DriftViolation] = []

    low_bad = absg < drift.K1 * absu - slack
    if np.any(low_bad):
        i = int(np.argmax(low_bad))
        violations.append(
            DriftViolation(
                "lower_envelope",
                float(xs[i]),
                f"|g(x)|={absg[i]:.6g} < K1*|x-x*|={drift.K1 * absu[i]:.6g}",
            )
        )
    high_bad = absg > drift.K2 * absu + slack
    if np.any(high_bad):
        i = int(np.argmax(high_bad))
        violations.append(
            DriftViolation(
                "upper_envelope",
                float(xs[i]),
                f"|g(x)|={absg[i]:.6g} > K2*|x-x*|={drift.K2 * absu[i]:.6g}",
            )
        )

    h = 1e-4
    gpp = (eval_g(drift, xs + h) - 2.0 * g + eval_g(drift, xs - h)) / (h * h)
    curv_bad = np.abs(gpp) > drift.Ka + 1e-4
    if np.any(curv_bad):
        i = int(np.argmax(curv_bad))
        violations.append(
            DriftViolation(
                "curvature",
                float(xs[i]),
                f"|g''(x)|~{abs(gpp[i]):.6g} > Ka={drift.Ka:.6g}",
            )
        )

    sign_bad = u * g > slack
    if np.any(sign_bad):
        i = int(np.argmax(sign_bad))
        violations.append(
            DriftViolation(
                "push_back_sign",
                float(xs[i]),
                f"(x-x*)*g(x)={u[i] * g[i]:.6g} > 0",
            )
        )

    return DriftValidationReport(not violations, tuple(violations))


@dataclass(frozen=True)
class Rademacher:
    """u = +sigma or -sigma with probability 1/2 each, independent of the past."""

    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def Ku(self) -> float:
        return self.sigma

    def initial_state(self) -> int:
        return 0

    def describe(self) -> dict:
        return {"kind": "rademacher", "sigma": self.sigma}


@dataclass(frozen=True)
class TwoPointAdaptive:
    """Two-point noise whose success probability depends on the last sign.

    Given the current p, the draw is +sigma*sqrt((1-p)/p) with probability
    p and -sigma*sqrt(p/(1-p)) with probability 1-p, which pins the
    conditional mean to 0 and the conditional second moment to sigma^2 for
    every p.  The state rule is mean-reverting: after a positive draw
    p = p_min, after a negative draw p = p_max, and the first draw uses the
    midpoint.
    """

    sigma: float
    p_min: float
    p_max: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not (0.0 < self.p_min <= self.p_max < 1.0):
            raise ValueError(
                f"need 0 < p_min <= p_max < 1, got p_min={self.p_min}, "
                f"p_max={self.p_max}"
            )

    @property
    def Ku(self) -> float:
        worst_pos = self.sigma * math.sqrt((1.0 - self.p_min) / self.p_min)
        worst_neg = self.sigma * math.sqrt(self.p_max / (1.0 - self.p_max))
        return max(worst_pos, worst_neg)

    def initial_state(self) -> int:
        return 0

    def p_for_state(self, state: int) -> float:
        """Map the previous draw's sign (0 = no history) to a probability."""
        if state > 0:
            return self.p_min
        if state < 0:
            return self.p_max
        return 0.5 * (self.p_min + self.p_max)

    def outcomes(self, p: float) -> tuple[float, float]:
        """(positive value, negative value) of the two-point law at p."""
        pos = self.sigma * math.sqrt((1.0 - p) / p)
        neg = -self.sigma * math.sqrt(p / (1.0 - p))
        return pos, neg

    def describe(self) -> dict:
        return {
            "kind": "two_point_adaptive",
            "sigma": self.sigma,
            "p_min": self.p_min,
            "p_max": self.p_max,
        }


NoiseModel = Union[Rademacher, TwoPointAdaptive]


def sample_noise(noise: NoiseModel, state: int, stream, k: int) -> tuple[float, int]:
    """Draw the step-k noise value from a replica stream.

    Returns (u, next_state).  The stream provides the deterministic draws
    for position k (see engine.ReplicaStream); |u| <= noise.Ku always, and
    given the state the two possible outcomes have exact mean 0 and exact
    second moment sigma^2.
    """
    if isinstance(noise, Rademacher):
        return noise.sigma * stream.rademacher_sign(k), 0
    p = noise.p_for_state(state)
    pos, neg = noise.outcomes(p)
    if stream.uniform(k) < p:
        return pos, 1
    return neg, -1


@dataclass(frozen=True)
class ProblemSpec:
    """A drift, a noise model, the gain b and the start point x0."""

    drift: DriftFunction
    noise: NoiseModel
    b: float
    x0: float

    def __post_init__(self) -> None:
        if not self.b > 0:
            raise ValueError(f"b must be positive, got {self.b}")

    @property
    def c(self) -> float:
        """b * g'(x*), the contraction exponent of the linearized recursion."""
        return self.b * self.drift.gprime_star

    def require_mdp_regime(self) -> None:
        """The moderate-deviation statements need b * g'(x*) < -1."""
        if not self.c < -1.0:
            raise ValueError(
                f"b * g'(x*) = {self.c} must be < -1 for deviation-rate "
                "operations"
            )

    def describe(self) -> dict:
        return {
            "drift": self.drift.describe(),
            "noise": self.noise.describe(),
            "b": self.b,
            "x0": self.x0,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
