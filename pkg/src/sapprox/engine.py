"""Path simulation, weighted martingale sums, the exact three-term
deviation decomposition, and the deterministic boundedness envelope.

Reproducible parallel noise
---------------------------
Every replica derives its noise from (experiment seed, replica index)
through a fixed counter-based mixing function, so results are bit-identical
however replicas are scheduled across workers:

    key(seed, i)   = mix64(mix64(seed) XOR i * 0x9E3779B97F4A7C15)
    z(i, j; D)     = mix64(key XOR mix64(D + j * 0xD1B54A32D192ED03))

where mix64 is the SplitMix64 finalizer and D is a domain constant that
separates the two draw kinds:

  * Rademacher sign at step k: bit (k mod 64) of z(i, k // 64; D_SIGN),
    mapped 1 -> +1, 0 -> -1.
  * Uniform at step k: the top 53 bits of z(i, k; D_UNIF) scaled to [0, 1).

The scalar ReplicaStream and the vectorized batch runner evaluate the same
functions, so a batch row equals the corresponding single-replica run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from sapprox.model import (
    LinearDrift,
    ProblemSpec,
    Rademacher,
    eval_g,
    sample_noise,
)

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_STEP = 0xD1B54A32D192ED03
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_D_SIGN = 0x8BADF00D5EED0001
_D_UNIF = 0x5EEDFACE00000002
_INV53 = 2.0**-53

# Replicas are processed in fixed-width blocks; the width never affects
# results (all batch operations are elementwise), only memory locality.
BLOCK = 1 << 15

FORCED_MODES = (None, "zero", "plus_sigma")


def _mix64(z: int) -> int:
    z &= _MASK
    z ^= z >> 30
    z = (z * _MIX1) & _MASK
    z ^= z >> 27
    z = (z * _MIX2) & _MASK
    z ^= z >> 31
    return z


def replica_key(seed: int, replica: int) -> int:
    return _mix64(_mix64(seed & _MASK) ^ ((replica * _GOLDEN) & _MASK))


def _step_key(domain: int, j: int) -> int:
    return _mix64((domain + j * _STEP) & _MASK)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MIX1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MIX2)
    z ^= z >> np.uint64(31)
    return z


def replica_keys_array(seed: int, lo: int, hi: int) -> np.ndarray:
    """Vector of replica_key(seed, i) for i in [lo, hi)."""
    base = np.uint64(_mix64(seed & _MASK))
    idx = np.arange(lo, hi, dtype=np.uint64)
    z = np.bitwise_xor(base, idx * np.uint64(_GOLDEN))
    return _mix64_array(z)


class ReplicaStream:
    """Scalar view of one replica's noise stream."""

    def __init__(self, seed: int, replica: int = 0):
        self.seed = seed
        self.replica = replica
        self._key = replica_key(seed, replica)
        self._sign_block = -1
        self._sign_bits = 0

    def rademacher_sign(self, k: int) -> float:
        j, r = divmod(k, 64)
        if j != self._sign_block:
            self._sign_bits = _mix64(self._key ^ _step_key(_D_SIGN, j))
            self._sign_block = j
        return 1.0 if (self._sign_bits >> r) & 1 else -1.0

    def uniform(self, k: int) -> float:
        z = _mix64(self._key ^ _step_key(_D_UNIF, k))
        return (z >> 11) * _INV53


@dataclass(frozen=True)
class Trajectory:
    """One recorded path: X_0..X_{n+1} and the noise U_1..U_{n+1}."""

    xs: np.ndarray
    us: np.ndarray
    spec: ProblemSpec
    fingerprint: str
    seed: int
    replica: int
    forced: Optional[str]

    @property
    def horizon(self) -> int:
        return len(self.us) - 1

    @property
    def final_deviation(self) -> float:
        return float(self.xs[-1]) - self.spec.drift.x_star

    def write_csv(self, fh) -> None:
        """Rows k, x_k, u_k; u_0 is empty (no noise enters X_0)."""
        fh.write("k,x_k,u_k\n")
        fh.write(f"0,{self.xs[0]:.17g},\n")
        for k in range(1, len(self.xs)):
            fh.write(f"{k},{self.xs[k]:.17g},{self.us[k - 1]:.17g}\n")


@dataclass(frozen=True)
class Decomposition:
    """The three exact contributions to X_{n+1} - x*:

    i1: contracted start offset, i2: weighted Taylor remainders,
    i3: weighted noise sum.  i1 + i2 + i3 equals the final deviation
    up to float rounding.
    """

    i1: float
    i2: float
    i3: float

    @property
    def total(self) -> float:
        return self.i1 + self.i2 + self.i3


def step(spec: ProblemSpec, x: float, k: int, u: float) -> float:
    """One recursion update: x + b/(k+1) * (g(x) + u)."""
    return x + (spec.b / (k + 1.0)) * (eval_g(spec.drift, x) + u)


def _forced_value(spec: ProblemSpec, forced: str) -> float:
    if forced == "zero":
        return 0.0
    if forced == "plus_sigma":
        return spec.noise.sigma
    raise ValueError(f"forced must be one of {FORCED_MODES}, got {forced!r}")


def simulate(
    spec: ProblemSpec,
    n: int,
    seed: int,
    record: bool = True,
    replica: int = 0,
    forced: Optional[str] = None,
):
    """Run the recursion to X_{n+1}.

    Returns a Trajectory when record is on, else only the final deviation
    X_{n+1} - x* in O(1) memory.  forced="zero" / "plus_sigma" replaces
    every noise draw with the constant (debug mode for deterministic
    cross-checks).  Deterministic given (spec, n, seed, replica).
    """
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    stream = ReplicaStream(seed, replica)
    state = spec.noise.initial_state()
    x = spec.x0
    if record:
        xs = np.empty(n + 2)
        us = np.empty(n + 1)
        xs[0] = x
    for k in range(n + 1):
        if forced is None:
            u, state = sample_noise(spec.noise, state, stream, k)
        else:
            u = _forced_value(spec, forced)
        x = x + (spec.b / (k + 1.0)) * (eval_g(spec.drift, x) + u)
        if record:
            xs[k + 1] = x
            us[k] = u
    if record:
        return Trajectory(
            xs=xs,
            us=us,
            spec=spec,
            fingerprint=spec.fingerprint(),
            seed=seed,
            replica=replica,
            forced=forced,
        )
    return x - spec.drift.x_star


def weighted_sum(
    spec: ProblemSpec,
    n: int,
    seed: int,
    replica: int = 0,
    forced: Optional[str] = None,
) -> float:
    """b * sum_{k=0}^{n} beta(c, k+1, n) / (k+1) * U_{k+1} with c = b g'(x*).

    Evaluated by the forward recurrence s <- (1 + c/(k+1)) s + b/(k+1) U,
    one sweep, O(1) memory; this is the noise part of the linearized
    recursion started at the root.  Requires b g'(x*) < -1.
    """
    spec.require_mdp_regime()
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    c = spec.c
    stream = ReplicaStream(seed, replica)
    state = spec.noise.initial_state()
    s = 0.0
    for k in range(n + 1):
        if forced is None:
            u, state = sample_noise(spec.noise, state, stream, k)
        else:
            u = _forced_value(spec, forced)
        fk = 1.0 + c / (k + 1.0)
        ck = spec.b / (k + 1.0)
        s = fk * s + ck * u
    return s


def taylor_decompose(traj: Trajectory) -> Decomposition:
    """Split X_{n+1} - x* into start, remainder and noise contributions.

    i1 = beta(c, 0, n) (x0 - x*)
    i2 = b sum_k beta(c, k+1, n)/(k+1) * R_k,  R_k = g(X_k) - g'(x*)(X_k - x*)
    i3 = b sum_k beta(c, k+1, n)/(k+1) * U_{k+1}

    R_k is the exact Taylor remainder, so the identity i1 + i2 + i3 =
    X_{n+1} - x* holds without any unobservable intermediate point.
    """
    if traj.xs is None or len(traj.xs) != len(traj.us) + 1:
        raise ValueError("taylor_decompose needs a fully recorded trajectory")
    spec = traj.spec
    drift = spec.drift
    n = traj.horizon
    c = spec.c
    j = np.arange(n + 1, dtype=np.float64)
    f = 1.0 + c / (j + 1.0)
    suffix = np.ones(n + 1)
    if n >= 1:
        suffix[:n] = np.cumprod(f[:0:-1])[::-1]
    beta0 = f[0] * suffix[0]
    coef = spec.b * suffix / (j + 1.0)
    dev = traj.xs[:-1] - drift.x_star
    g_vals = eval_g(drift, traj.xs[:-1])
    remainder = g_vals - drift.gprime_star * dev
    i1 = beta0 * (traj.xs[0] - drift.x_star)
    i2 = float(np.sum(coef * remainder))
    i3 = float(np.sum(coef * traj.us))
    return Decomposition(i1=i1, i2=i2, i3=i3)


def envelope_bound(spec: ProblemSpec, n: int) -> tuple[np.ndarray, float]:
    """Deterministic pathwise envelope B_0..B_{n+1} with |X_k - x*| <= B_k.

    B_{k+1} = q_k B_k + b Ku/(k+1) where q_k is the worst contraction
    factor over slopes in [-K2, -K1]; F is the envelope supremum.
    """
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    b = spec.b
    k1 = spec.drift.K1
    k2 = spec.drift.K2
    ku = spec.noise.Ku
    ks = np.arange(n + 1, dtype=np.float64)
    q = np.maximum(np.abs(1.0 - b * k1 / (ks + 1.0)), np.abs(1.0 - b * k2 / (ks + 1.0)))
    drive = b * ku / (ks + 1.0)
    env = np.empty(n + 2)
    env[0] = abs(spec.x0 - spec.drift.x_star)
    cur = env[0]
    for k in range(n + 1):
        cur = q[k] * cur + drive[k]
        env[k + 1] = cur
    return env, float(np.max(env))


# ---------------------------------------------------------------------------
# Vectorized batch execution (replica blocks)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BatchResult:
    hits: int
    replicas: int
    envelope_violations: int


def _rademacher_u(zbuf, bitbuf, r, sigma, ubuf):
    """ubuf <- sigma * (+-1) from bit r of the hash block; exact via
    2*sigma*bit - sigma."""
    np.right_shift(zbuf, np.uint64(r), out=bitbuf)
    np.bitwise_and(bitbuf, np.uint64(1), out=bitbuf)
    np.multiply(bitbuf, 2.0 * sigma, out=ubuf, casting="unsafe")
    ubuf -= sigma
    return ubuf


class _BlockRunner:
    """Simulates one block of replicas [lo, hi) step-synchronously."""

    def __init__(self, spec: ProblemSpec, target: str, n: int, seed: int,
                 lo: int, hi: int):
        if target not in ("recursion", "weighted_sum"):
            raise ValueError(f"unknown target {target!r}")
        if target == "weighted_sum":
            spec.require_mdp_regime()
        self.spec = spec
        self.target = target
        self.n = n
        self.seed = seed
        self.lo = lo
        self.hi = hi
        self.width = hi - lo

    def run(self, envelope: Optional[np.ndarray] = None) -> tuple[np.ndarray, int]:
        """Returns (final deviations, envelope violation count)."""
        spec = self.spec
        noise = spec.noise
        n = self.n
        w = self.width
        keys = replica_keys_array(self.seed, self.lo, self.hi)
        zbuf = np.empty(w, dtype=np.uint64)
        tbuf = np.empty(w, dtype=np.uint64)
        ubuf = np.empty(w)
        gbuf = np.empty(w)
        bk = spec.b / (np.arange(n + 1, dtype=np.float64) + 1.0)
        is_rademacher = isinstance(noise, Rademacher)
        if not is_rademacher:
            p_table = np.array(
                [noise.p_for_state(0), noise.p_for_state(1), noise.p_for_state(-1)]
            )
            pos_table = np.array([noise.outcomes(p)[0] for p in p_table])
            neg_table = np.array([noise.outcomes(p)[1] for p in p_table])
            state = np.zeros(w, dtype=np.intp)
        if self.target == "recursion":
            x = np.full(w, spec.x0)
            x_star = spec.drift.x_star
        else:
            s = np.zeros(w)
            c = spec.c
            fk = 1.0 + c / (np.arange(n + 1, dtype=np.float64) + 1.0)
        violations = 0
        sigma = noise.sigma
        for k in range(n + 1):
            if is_rademacher:
                j, r = divmod(k, 64)
                if r == 0:
                    np.bitwise_xor(keys, np.uint64(_step_key(_D_SIGN, j)), out=zbuf)
                    _mix64_array(zbuf)
                _rademacher_u(zbuf, tbuf, r, sigma, ubuf)
            else:
                np.bitwise_xor(keys, np.uint64(_step_key(_D_UNIF, k)), out=zbuf)
                _mix64_array(zbuf)
                np.right_shift(zbuf, np.uint64(11), out=tbuf)
                np.multiply(tbuf, _INV53, out=ubuf, casting="unsafe")
                p = p_table[state]
                went_up = ubuf < p
                ubuf[:] = np.where(went_up, pos_table[state], neg_table[state])
                state = np.where(went_up, 1, -1)
            if self.target == "recursion":
                np.subtract(x, x_star, out=gbuf)
                self._apply_drift(gbuf)
                gbuf += ubuf
                gbuf *= bk[k]
                x += gbuf
                if envelope is not None:
                    np.abs(np.subtract(x, x_star, out=gbuf), out=gbuf)
                    violations += int(np.count_nonzero(gbuf > envelope[k + 1]))
            else:
                s *= fk[k]
                ubuf *= bk[k]
                s += ubuf
        if self.target == "recursion":
            return x - x_star, violations
        return s, violations

    def _apply_drift(self, dev: np.ndarray) -> None:
        """dev <- g(x) given dev = x - x_star on entry."""
        drift = self.spec.drift
        if isinstance(drift, LinearDrift):
            dev *= drift.alpha1
        else:
            # -c1*u - c2*sin(u)
            t = np.sin(dev)
            t *= drift.c2
            dev *= drift.c1
            dev += t
            np.negative(dev, out=dev)


def _block_ranges(replicas: int):
    for lo in range(0, replicas, BLOCK):
        yield lo, min(lo + BLOCK, replicas)


def batch_final_deviations(
    spec: ProblemSpec,
    target: str,
    n: int,
    seed: int,
    replicas: int,
    workers: int = 1,
) -> np.ndarray:
    """Final deviations for replicas 0..replicas-1, in replica order.

    Row i is bit-identical to the single-replica run with the same seed,
    independent of worker count.
    """
    if replicas < 1:
        raise ValueError(f"replicas must be >= 1, got {replicas}")

    def one(rng: tuple[int, int]) -> np.ndarray:
        lo, hi = rng
        return _BlockRunner(spec, target, n, seed, lo, hi).run()[0]

    ranges = list(_block_ranges(replicas))
    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(one, ranges))
    else:
        parts = [one(r) for r in ranges]
    return np.concatenate(parts)


def count_tail_hits(
    spec: ProblemSpec,
    target: str,
    n: int,
    seed: int,
    replicas: int,
    threshold: float,
    inclusive: bool = False,
    workers: int = 1,
    envelope: Optional[np.ndarray] = None,
) -> BatchResult:
    """Count replicas whose final |deviation| exceeds the threshold.

    inclusive selects >= instead of >.  When an envelope array is given,
    |X_k - x*| <= B_k is also checked at every step of every path and the
    number of violating (path, step) pairs is returned.  Hit counts are
    exact integers accumulated in replica-block order, so the result does
    not depend on worker count.
    """
    if replicas < 1:
        raise ValueError(f"replicas must be >= 1, got {replicas}")

    def one(rng: tuple[int, int]) -> tuple[int, int]:
        lo, hi = rng
        devs, violations = _BlockRunner(spec, target, n, seed, lo, hi).run(
            envelope=envelope
        )
        mags = np.abs(devs)
        hits = int(np.count_nonzero(mags >= threshold if inclusive else mags > threshold))
        return hits, violations

    ranges = list(_block_ranges(replicas))
    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(one, ranges))
    else:
        parts = [one(r) for r in ranges]
    hits = sum(p[0] for p in parts)
    violations = sum(p[1] for p in parts)
    return BatchResult(hits=hits, replicas=replicas, envelope_violations=violations)


def weighted_sums_over_signs(
    spec: ProblemSpec, n: int, signs: np.ndarray
) -> np.ndarray:
    """Weighted-sum statistic for explicit sign patterns (enumeration support).

    signs has shape (m, n+1) with entries +-1; returns the m statistics for
    Rademacher noise U_{k+1} = sigma * signs[:, k], evaluated by the same
    forward recurrence as weighted_sum.
    """
    spec.require_mdp_regime()
    if signs.ndim != 2 or signs.shape[1] != n + 1:
        raise ValueError(f"signs must have shape (m, {n + 1})")
    c = spec.c
    sigma = spec.noise.sigma
    s = np.zeros(signs.shape[0])
    for k in range(n + 1):
        fk = 1.0 + c / (k + 1.0)
        ck = spec.b / (k + 1.0)
        s = fk * s + ck * (sigma * signs[:, k])
    return s
