import math

import numpy as np
import pytest

from sapprox.engine import (
    ReplicaStream,
    batch_final_deviations,
    count_tail_hits,
    envelope_bound,
    replica_key,
    replica_keys_array,
    simulate,
    step,
    taylor_decompose,
    weighted_sum,
    weighted_sums_over_signs,
)
from sapprox.model import (
    LinearDrift,
    ProblemSpec,
    Rademacher,
    SineLinearDrift,
    TwoPointAdaptive,
)
from sapprox.weights import beta_value, h_norm


def linear_spec(alpha1=-1.0, b=2.0, sigma=1.0, x0=1.0, x_star=0.0):
    return ProblemSpec(LinearDrift(alpha1, x_star), Rademacher(sigma), b, x0)


def sine_spec(c1=2.0, c2=1.0, b=1.6, sigma=1.0, x0=0.7):
    return ProblemSpec(SineLinearDrift(c1, c2, 0.0), Rademacher(sigma), b, x0)


class TestStreams:
    def test_scalar_matches_vector_keys(self):
        keys = replica_keys_array(42, 0, 64)
        for i in (0, 1, 17, 63):
            assert int(keys[i]) == replica_key(42, i)

    def test_uniforms_in_range(self):
        st = ReplicaStream(7, 3)
        us = [st.uniform(k) for k in range(5000)]
        assert all(0.0 <= u < 1.0 for u in us)
        assert abs(np.mean(us) - 0.5) < 0.02

    def test_signs_balanced(self):
        st = ReplicaStream(7, 3)
        sg = [st.rademacher_sign(k) for k in range(5000)]
        assert set(sg) == {1.0, -1.0}
        assert abs(np.mean(sg)) < 0.05

    def test_streams_differ_across_replicas_and_seeds(self):
        a = [ReplicaStream(1, 0).uniform(k) for k in range(32)]
        b = [ReplicaStream(1, 1).uniform(k) for k in range(32)]
        c = [ReplicaStream(2, 0).uniform(k) for k in range(32)]
        assert a != b and a != c

    def test_nonsequential_access_consistent(self):
        st1 = ReplicaStream(5, 2)
        forward = [st1.rademacher_sign(k) for k in range(130)]
        st2 = ReplicaStream(5, 2)
        backward = [st2.rademacher_sign(k) for k in reversed(range(130))]
        assert forward == backward[::-1]


class TestStep:
    def test_hand_example(self):
        # 0.5 + (2/5)(-0.5 + 0.1) = 0.34
        assert step(linear_spec(), 0.5, 4, 0.1) == pytest.approx(0.34, rel=1e-15)

    def test_fixed_point(self):
        spec = sine_spec(x0=0.0)
        assert step(spec, 0.0, 12, 0.0) == 0.0

    def test_contraction_factor(self):
        spec = linear_spec(alpha1=-1.0, b=1.0)
        for k in (0, 3, 9):
            x = 0.8
            assert step(spec, x, k, 0.0) == pytest.approx(
                x * (1.0 - 1.0 / (k + 1)), rel=1e-15
            )


class TestSimulate:
    def test_single_step_horizon(self):
        spec = linear_spec()
        traj = simulate(spec, 0, 11, record=True)
        u1 = traj.us[0]
        want = spec.x0 + spec.b * (-spec.x0 + u1)
        assert traj.xs[1] == pytest.approx(want, rel=1e-15)
        assert len(traj.xs) == 2 and len(traj.us) == 1

    def test_bit_identical_reruns(self):
        spec = sine_spec()
        a = simulate(spec, 300, 123, record=True)
        b = simulate(spec, 300, 123, record=True)
        assert np.array_equal(a.xs, b.xs) and np.array_equal(a.us, b.us)

    def test_recursion_consistency(self):
        for spec in (linear_spec(), sine_spec()):
            traj = simulate(spec, 500, 77, record=True)
            for k in range(501):
                want = step(spec, float(traj.xs[k]), k, float(traj.us[k]))
                err = abs(traj.xs[k + 1] - want) / max(1e-300, abs(want))
                assert err <= 1e-12

    def test_forced_zero_matches_weight_product(self):
        # cross-module oracle: deterministic recursion equals the product
        spec = linear_spec(alpha1=-0.75, b=2.0)  # c = -1.5, no zero factor
        dev = simulate(spec, 200, 0, record=False, forced="zero")
        want = beta_value(spec.c, 0, 200) * spec.x0
        assert dev == pytest.approx(want, rel=1e-12)

    def test_record_off_matches_final(self):
        spec = sine_spec()
        traj = simulate(spec, 123, 5, record=True)
        dev = simulate(spec, 123, 5, record=False)
        assert dev == traj.final_deviation

    def test_rejects_negative_horizon(self):
        with pytest.raises(ValueError):
            simulate(linear_spec(), -1, 0)

    def test_trajectory_csv_shape(self, tmp_path):
        spec = linear_spec()
        traj = simulate(spec, 10, 7, record=True)
        out = tmp_path / "t.csv"
        with open(out, "w") as fh:
            traj.write_csv(fh)
        lines = out.read_text().splitlines()
        assert lines[0] == "k,x_k,u_k"
        assert len(lines) == 13  # header + 12 states
        assert lines[1].endswith(",")  # u_0 empty


class TestWeightedSum:
    def test_single_term(self):
        spec = linear_spec()
        s = weighted_sum(spec, 0, 99)
        u1 = ReplicaStream(99, 0).rademacher_sign(0) * spec.noise.sigma
        assert s == spec.b * u1

    def test_forced_plus_sigma_hand_expansion(self):
        # n=2, b=1, alpha1=-2, sigma=1, all U = +1 -> 0.5
        spec = ProblemSpec(LinearDrift(-2.0, 0.0), Rademacher(1.0), 1.0, 0.0)
        assert weighted_sum(spec, 2, 0, forced="plus_sigma") == pytest.approx(
            0.5, rel=1e-15
        )

    def test_rejects_weak_contraction(self):
        weak = ProblemSpec(LinearDrift(-1.0, 0.0), Rademacher(1.0), 0.9, 0.0)
        with pytest.raises(ValueError):
            weighted_sum(weak, 5, 0)

    def test_deterministic(self):
        spec = linear_spec()
        assert weighted_sum(spec, 64, 3) == weighted_sum(spec, 64, 3)

    def test_matches_explicit_weights(self):
        # independent oracle: dot product against materialized products
        spec = linear_spec(alpha1=-0.9)  # c = -1.8
        n = 40
        traj_stream = ReplicaStream(4, 0)
        us = np.array(
            [spec.noise.sigma * traj_stream.rademacher_sign(k) for k in range(n + 1)]
        )
        w = np.array(
            [spec.b * beta_value(spec.c, k + 1, n) / (k + 1) for k in range(n + 1)]
        )
        assert weighted_sum(spec, n, 4) == pytest.approx(float(w @ us), rel=1e-12)


class TestBatchEngine:
    def test_recursion_rows_match_scalar_bitwise(self):
        spec = linear_spec()
        batch = batch_final_deviations(spec, "recursion", 64, 2024, 16)
        scalar = np.array(
            [simulate(spec, 64, 2024, record=False, replica=i) for i in range(16)]
        )
        assert np.array_equal(batch, scalar)

    def test_weighted_sum_rows_match_scalar_bitwise(self):
        spec = linear_spec()
        batch = batch_final_deviations(spec, "weighted_sum", 64, 2024, 16)
        scalar = np.array([weighted_sum(spec, 64, 2024, replica=i) for i in range(16)])
        assert np.array_equal(batch, scalar)

    def test_two_point_rows_match_scalar_bitwise(self):
        spec = ProblemSpec(
            LinearDrift(-1.0, 0.0), TwoPointAdaptive(1.0, 0.3, 0.7), 2.0, 1.0
        )
        batch = batch_final_deviations(spec, "recursion", 48, 9, 12)
        scalar = np.array(
            [simulate(spec, 48, 9, record=False, replica=i) for i in range(12)]
        )
        assert np.array_equal(batch, scalar)

    def test_sine_rows_match_scalar_closely(self):
        spec = sine_spec()
        batch = batch_final_deviations(spec, "recursion", 48, 9, 12)
        scalar = np.array(
            [simulate(spec, 48, 9, record=False, replica=i) for i in range(12)]
        )
        assert np.allclose(batch, scalar, rtol=1e-12, atol=1e-14)

    def test_worker_count_is_invisible(self):
        spec = linear_spec()
        a = count_tail_hits(spec, "recursion", 300, 8, 200_000, 0.1, workers=1)
        b = count_tail_hits(spec, "recursion", 300, 8, 200_000, 0.1, workers=4)
        assert a == b

    def test_inclusive_vs_strict(self):
        spec = linear_spec()
        devs = batch_final_deviations(spec, "weighted_sum", 10, 5, 4096)
        t = float(np.abs(devs)[17])  # an attained value
        strict = count_tail_hits(spec, "weighted_sum", 10, 5, 4096, t).hits
        incl = count_tail_hits(
            spec, "weighted_sum", 10, 5, 4096, t, inclusive=True
        ).hits
        assert incl > strict
        assert incl == int(np.count_nonzero(np.abs(devs) >= t))
        assert strict == int(np.count_nonzero(np.abs(devs) > t))


class TestTaylorDecompose:
    def test_linear_remainder_exactly_zero(self):
        traj = simulate(linear_spec(), 200, 5, record=True)
        dec = taylor_decompose(traj)
        assert dec.i2 == 0.0
        dev = traj.final_deviation
        assert abs(dec.i1 + dec.i3 - dev) / max(1.0, abs(dev)) < 1e-10

    def test_fixed_point_all_zero(self):
        spec = sine_spec(x0=0.0)
        traj = simulate(spec, 50, 1, record=True, forced="zero")
        dec = taylor_decompose(traj)
        assert (dec.i1, dec.i2, dec.i3) == (0.0, 0.0, 0.0)

    def test_sine_identity_small_horizon(self):
        spec = sine_spec()
        traj = simulate(spec, 10, 42, record=True)
        dec = taylor_decompose(traj)
        dev = traj.final_deviation
        assert abs(dec.total - dev) / max(1.0, abs(dev)) < 1e-10

    def test_identity_random_sample(self):
        rng = np.random.default_rng(99)
        for _ in range(50):
            n = int(rng.integers(1, 300))
            seed = int(rng.integers(0, 2**62))
            spec = sine_spec(x0=float(rng.normal()))
            traj = simulate(spec, n, seed, record=True)
            dec = taylor_decompose(traj)
            dev = traj.final_deviation
            assert abs(dec.total - dev) / max(1.0, abs(dev)) < 1e-10

    def test_remainder_bounded_by_curvature(self):
        spec = sine_spec()
        ka = spec.drift.Ka
        for seed in range(5):
            traj = simulate(spec, 400, seed, record=True)
            dev = traj.xs[:-1] - spec.drift.x_star
            g_vals = spec.drift(traj.xs[:-1])
            rem = g_vals - spec.drift.gprime_star * dev
            assert np.all(np.abs(rem) <= 0.5 * ka * dev * dev + 1e-15)


class TestEnvelope:
    def test_one_step_value(self):
        # q_0 = |1 - 2| = 1, drive = 2: B_1 = 1*1 + 2 = 3
        env, sup = envelope_bound(linear_spec(), 5)
        assert env[0] == 1.0
        assert env[1] == 3.0
        assert sup == 3.0

    def test_no_noise_at_root_is_zero(self):
        spec = ProblemSpec(
            LinearDrift(-1.0, 0.0), TwoPointAdaptive(1e-12, 0.5, 0.5), 2.0, 0.0
        )
        # Ku ~ 1e-12: envelope collapses towards zero with x0 = x*
        env, sup = envelope_bound(spec, 100)
        assert sup <= 1e-9

    def test_domination_monte_carlo(self):
        spec = linear_spec()
        env, _ = envelope_bound(spec, 2000)
        res = count_tail_hits(
            spec, "recursion", 2000, 31, 5000, math.inf, envelope=env
        )
        assert res.envelope_violations == 0

    def test_domination_recorded_paths_every_step(self):
        spec = sine_spec()
        env, _ = envelope_bound(spec, 500)
        for seed in range(20):
            traj = simulate(spec, 500, seed, record=True)
            assert np.all(np.abs(traj.xs - spec.drift.x_star) <= env)

    def test_shape_bound(self):
        # B_k <= C (|x0-x*| k^{-b K1} + 1) with C fit on the first 100 steps
        spec = linear_spec()
        env, _ = envelope_bound(spec, 5000)
        ks = np.arange(1, 5001 + 1, dtype=np.float64)
        shape = abs(spec.x0) * ks ** (-spec.b * spec.drift.K1) + 1.0
        fit = np.max(env[1:101] / shape[:100])
        assert np.all(env[1:] <= fit * shape * (1.0 + 1e-12))


class TestSecondMomentIdentity:
    def test_enumerated_small_horizons(self):
        spec = ProblemSpec(LinearDrift(-2.0, 0.0), Rademacher(1.0), 1.0, 0.0)
        for n in (0, 1, 2, 5):
            m = n + 1
            idx = np.arange(1 << m, dtype=np.uint64)[:, None]
            bits = (idx >> np.arange(m, dtype=np.uint64)[None, :]) & np.uint64(1)
            signs = 2.0 * bits.astype(np.float64) - 1.0
            s = weighted_sums_over_signs(spec, n, signs)
            h = h_norm(spec.b, spec.c, n)
            assert abs(float(np.mean((h * s) ** 2)) - 1.0) <= 1e-12
