"""Time stepping: exactness in degenerate limits, bookkeeping, envelopes."""

import numpy as np
import pytest
from scipy import stats

from levykin import (
    RandomStream,
    StableNoiseSpec,
    box_probe_points,
    builtin_drift,
    displacement_probe,
    effective_envelope_constant,
    euler_jump_step,
    gronwall_envelope,
    sample_increment,
    simulate,
)


class TestSingleStep:
    def test_one_step_by_hand(self, harmonic):
        # v' = v + h B(x, v) + dl; x' = x + h (v + v') / 2
        x = np.array([[0.5]])
        v = np.array([[1.0]])
        h, dl = 0.1, np.array([[0.03]])
        x1, v1, _ = euler_jump_step(harmonic, x, v, h, dl)
        b = -0.5 - 1.0
        v_want = 1.0 + h * b + 0.03
        assert v1[0, 0] == pytest.approx(v_want, rel=1e-14)
        assert x1[0, 0] == pytest.approx(0.5 + h * (1.0 + v_want) / 2, rel=1e-14)

    def test_no_drift_no_noise_is_free_flight(self):
        x, v = np.array([[1.0]]), np.array([[2.0]])
        x1, v1, _ = euler_jump_step(None, x, v, 0.25, None)
        assert v1[0, 0] == 2.0
        assert x1[0, 0] == pytest.approx(1.0 + 0.25 * 2.0)

    def test_truncation_freezes_drift_far_out(self, harmonic):
        x = np.array([[2000.0]])
        v = np.array([[0.0]])
        x1, v1, hit = euler_jump_step(harmonic, x, v, 0.1, None, truncation_radius=1000.0)
        assert v1[0, 0] == 0.0  # drift zeroed beyond the radius
        assert hit[0]


class TestSimulate:
    def test_horizon_zero_single_point(self, harmonic, spec15, stream):
        traj = simulate(harmonic, spec15, ([0.1], [0.2]), 0.0, 0.01, 3, stream)
        assert traj.times.shape == (1,)
        assert traj.x.shape == (3, 1, 1)
        np.testing.assert_allclose(traj.x[:, 0, 0], 0.1)

    def test_linear_drift_without_noise_matches_ode(self):
        # B = -v alone: v(t) = v0 e^{-t}
        m = builtin_drift("harmonic_damped", k=1e-12, gamma=1.0)
        traj = simulate(m, None, ([0.0], [1.0]), 1.0, 1e-3, 1, RandomStream(0))
        v_end = traj.v[0, -1, 0]
        assert abs(v_end - np.exp(-1.0)) < 1e-3

    def test_driftless_marginal_matches_increment_law(self, spec15, stream):
        M = 10_000
        traj = simulate(None, spec15, ([0.0], [0.5]), 1.0, 0.01, M, stream.child("m", 0))
        direct = sample_increment(spec15, 1.0, M, stream.child("m", 1))[:, 0] + 0.5
        assert stats.ks_2samp(traj.v[:, -1, 0], direct).pvalue > 0.01

    def test_replay_is_bit_exact(self, harmonic, spec15):
        a = simulate(harmonic, spec15, ([0.0], [0.0]), 0.5, 0.01, 8, RandomStream(11))
        b = simulate(harmonic, spec15, ([0.0], [0.0]), 0.5, 0.01, 8, RandomStream(11))
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.v, b.v)
        np.testing.assert_array_equal(a.sup_noise, b.sup_noise)

    def test_decomposition_mode_jump_bookkeeping(self, harmonic, spec15, stream):
        traj = simulate(
            harmonic, spec15, ([0.0], [0.0]), 2.0, 0.01, 4,
            stream.child("jumps"), mode="decomposed", delta=0.3,
        )
        n_jumps = 0
        for path_jumps in traj.jumps:
            for t_jump, size, _, v_pre, v_post in path_jumps:
                n_jumps += 1
                assert np.linalg.norm(size) > 0.3
                # the jump is applied atomically to v
                np.testing.assert_allclose(v_post - v_pre, size, rtol=1e-12)
        assert n_jumps > 0  # horizon 2 at delta 0.3 makes jumps near-certain

    def test_trapezoid_identity_on_jump_free_steps(self, spec15, stream):
        # x' - x = h (v + v') / 2 exactly wherever no big jump lands inside
        traj = simulate(
            None, spec15, ([0.0], [0.0]), 2.0, 0.01, 2,
            stream.child("vj"), mode="decomposed", delta=0.5,
        )
        for i, path_jumps in enumerate(traj.jumps):
            jump_ts = np.array([rec[0] for rec in path_jumps])
            for k in range(len(traj.times) - 1):
                t0, t1 = traj.times[k], traj.times[k + 1]
                if jump_ts.size and np.any((jump_ts > t0) & (jump_ts <= t1)):
                    continue
                h = t1 - t0
                want = traj.x[i, k] + h * (traj.v[i, k] + traj.v[i, k + 1]) / 2
                np.testing.assert_allclose(traj.x[i, k + 1], want, rtol=0, atol=1e-14)

    def test_exploded_paths_flagged_not_nan(self, spec15):
        # alpha small and long horizon make huge excursions likely
        wild = StableNoiseSpec(alpha=0.8, dim=1)
        traj = simulate(None, wild, ([0.0], [0.0]), 50.0, 0.05, 64,
                        RandomStream(1234), explosion_guard=1e6)
        assert np.all(np.isfinite(traj.x[~traj.exploded]))
        if traj.exploded.any():
            assert np.all(traj.explode_time[traj.exploded] >= 0)

    def test_step_must_be_positive(self, harmonic, spec15, stream):
        with pytest.raises(ValueError):
            simulate(harmonic, spec15, ([0.0], [0.0]), 1.0, 0.0, 1, stream)


class TestEnvelope:
    def test_free_flight_envelope_holds(self):
        traj = simulate(None, None, ([1.0], [1.0]), 1.0, 0.01, 1, RandomStream(0))
        chk = gronwall_envelope(traj, 1.0)
        assert chk.ok.all()

    def test_harmonic_paths_inside_envelope(self, harmonic, spec15, stream):
        traj = simulate(harmonic, spec15, ([0.5], [0.0]), 1.0, 0.01, 1000,
                        stream.child("env"))
        C = effective_envelope_constant(harmonic.growth_constant)
        chk = gronwall_envelope(traj, C)
        assert chk.ok.all()  # any violation is a scheme bug
        assert chk.margin.min() >= 0


class TestDisplacementProbe:
    def test_t_zero_probability_zero(self, harmonic, spec15, stream):
        table = displacement_probe(
            harmonic, spec15, [-0.5, -1.0], [0.5, 1.0], 0.2,
            [0.0, 0.05, 0.1], 500, stream,
        )
        assert table.probs[0] == 0.0

    def test_linear_envelope_over_small_times(self, harmonic, spec15, stream):
        t_grid = [0.02, 0.04, 0.06, 0.08, 0.1]
        table = displacement_probe(
            harmonic, spec15, [-0.5, -1.0], [0.5, 1.0], 0.5,
            t_grid, 2000, stream.child("lin"),
        )
        env = table.slope * np.asarray(t_grid) * 1.2
        assert np.all(table.probs <= env + 1e-12)

    def test_shrinking_epsilon_grows_probability(self, harmonic, spec15, stream):
        kw = dict(t_grid=[0.1], M=2000)
        wide = displacement_probe(harmonic, spec15, [-0.5, -1.0], [0.5, 1.0],
                                  0.8, stream=stream.child("e"), **kw)
        narrow = displacement_probe(harmonic, spec15, [-0.5, -1.0], [0.5, 1.0],
                                    0.4, stream=stream.child("e"), **kw)
        assert narrow.probs[0] >= wide.probs[0]


def test_box_probe_points_cover_corners_and_center():
    pts = box_probe_points([-0.5, -1.0], [0.5, 1.0])
    assert pts.shape[0] == 9
    as_tuples = {tuple(p) for p in pts}
    assert (0.0, 0.0) in as_tuples
    assert (-0.5, -1.0) in as_tuples and (0.5, 1.0) in as_tuples
