"""Particle and conditioned-law estimators for the long-run killed dynamics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levykin import (
    PhaseGrid,
    RandomStream,
    conditioned_law,
    estimate_lambda,
    estimate_phi,
    fleming_viot,
    push_through_killed,
    tv_distance,
)


class TestTVDistance:
    def test_identical_is_zero(self):
        p = np.array([0.2, 0.3, 0.5])
        assert tv_distance(p, p) == 0.0

    def test_disjoint_is_one(self):
        assert tv_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)

    def test_normalizes_inputs(self):
        # unnormalized counts are fine
        assert tv_distance([2.0, 2.0], [1.0, 1.0]) == 0.0

    @given(
        p=st.lists(st.floats(0.001, 10.0), min_size=4, max_size=4),
        q=st.lists(st.floats(0.001, 10.0), min_size=4, max_size=4),
        r=st.lists(st.floats(0.001, 10.0), min_size=4, max_size=4),
    )
    @settings(max_examples=50, deadline=None)
    def test_metric_properties(self, p, q, r):
        d_pq = tv_distance(p, q)
        assert 0.0 <= d_pq <= 1.0 + 1e-12
        assert d_pq == pytest.approx(tv_distance(q, p))
        assert d_pq <= tv_distance(p, r) + tv_distance(r, q) + 1e-12


class TestFlemingViot:
    def test_particles_stay_inside(self, harmonic, spec15, interval_domain, stream):
        fv = fleming_viot(harmonic, spec15, interval_domain, N=100, horizon=3.0,
                          step=0.02, stream=stream.child("fv"))
        assert interval_domain.contains(fv.ensemble.x).all()
        assert fv.ensemble.x.shape == (100, 1)

    def test_histogram_normalized(self, harmonic, spec15, interval_domain, stream):
        fv = fleming_viot(harmonic, spec15, interval_domain, N=100, horizon=3.0,
                          step=0.02, stream=stream.child("fv"))
        assert fv.histogram.sum() == pytest.approx(1.0, abs=1e-9)

    def test_resample_log_ordered(self, harmonic, spec15, interval_domain, stream):
        fv = fleming_viot(harmonic, spec15, interval_domain, N=100, horizon=3.0,
                          step=0.02, stream=stream.child("fv"))
        times = [rec[0] for rec in fv.ensemble.resample_log]
        assert times == sorted(times)
        assert fv.n_resampled == len(times)
        assert fv.resample_rate > 0  # killing certainly happens by t = 3

    def test_deterministic_given_stream(self, harmonic, spec15, interval_domain):
        a = fleming_viot(harmonic, spec15, interval_domain, N=50, horizon=1.0,
                         step=0.02, stream=RandomStream(4))
        b = fleming_viot(harmonic, spec15, interval_domain, N=50, horizon=1.0,
                         step=0.02, stream=RandomStream(4))
        np.testing.assert_array_equal(a.ensemble.x, b.ensemble.x)
        np.testing.assert_array_equal(a.histogram, b.histogram)

    def test_no_killing_means_plain_time_average(self, harmonic, spec15, stream):
        # wide domain, short horizon, damped drift: nothing exits
        from levykin import Domain

        big = Domain.interval(-50.0, 50.0)
        fv = fleming_viot(harmonic, spec15, big, N=50, horizon=0.5, step=0.02,
                          stream=stream.child("big"),
                          grid=PhaseGrid.regular(-50, 50, -60, 60, 10, 10),
                          initial=([0.0], [0.0]))
        assert fv.ensemble.resample_log == []
        assert fv.n_resampled == 0
        assert fv.histogram.sum() == pytest.approx(1.0, abs=1e-9)
        assert fv.truncated_fraction == 0.0


class TestConditionedLaw:
    def test_t_zero_point_mass(self, harmonic, spec15, interval_domain, stream):
        grid = PhaseGrid.regular(-1, 1, -4, 4, 10, 10)
        law = conditioned_law(harmonic, spec15, interval_domain, ([-0.5], [0.0]),
                              0.0, grid, 500, stream)
        assert law.survival == 1.0
        cell = int(grid.flat_index(np.array([[-0.5]]), np.array([[0.0]]))[0])
        assert law.mass[cell] == pytest.approx(1.0)

    def test_mass_sums_to_one(self, harmonic, spec15, interval_domain, stream):
        grid = PhaseGrid.regular(-1, 1, -6, 6, 12, 12)
        law = conditioned_law(harmonic, spec15, interval_domain, ([-0.5], [0.0]),
                              1.0, grid, 4000, stream.child("c"))
        assert law.mass.sum() == pytest.approx(1.0, abs=1e-9)
        # velocity-box leak reported separately, small for this box
        assert 0.0 <= law.truncated_fraction < 0.05
        assert law.survivors >= 500

    def test_insufficient_sample_size_rejected(self, harmonic, spec15,
                                               interval_domain, stream):
        grid = PhaseGrid.regular(-1, 1, -4, 4, 8, 8)
        with pytest.raises(ValueError, match="survivors"):
            conditioned_law(harmonic, spec15, interval_domain, ([-0.5], [0.0]),
                            5.0, grid, 600, stream.child("few"))


class TestLambdaFit:
    def test_exact_exponential_recovered(self):
        t = np.linspace(0.5, 6.0, 12)
        lam = 2.0
        curves = [(t, np.exp(-lam * t)), (t, 0.6 * np.exp(-lam * t))]
        fit = estimate_lambda(curves)
        assert fit.lambda_hat == pytest.approx(lam, rel=1e-9)
        assert fit.r_squared > 0.999999
        assert fit.window[0] <= 0.5 and fit.window[1] >= 5.9

    def test_shared_slope_across_starts(self):
        t = np.linspace(1.0, 5.0, 9)
        lam = 0.7
        curves = [(t, 0.9 * np.exp(-lam * t)), (t, 0.4 * np.exp(-lam * t))]
        fit = estimate_lambda(curves)
        assert fit.lambda_hat == pytest.approx(lam, rel=1e-9)
        assert fit.start_independent
        np.testing.assert_allclose(fit.per_curve_slopes, lam, rtol=1e-9)

    def test_transient_head_excluded(self):
        # curve linear only after t = 2: the window must not start before
        t = np.linspace(0.25, 6.0, 24)
        S = np.exp(-0.5 * t)
        S[t < 2.0] = np.exp(-0.5 * t[t < 2.0]) * (1 + 2.5 * (2.0 - t[t < 2.0]) ** 2)
        fit = estimate_lambda([(t, S), (t, 0.8 * S)], r2_threshold=0.999)
        assert fit.window[0] >= 1.9
        assert fit.lambda_hat == pytest.approx(0.5, rel=0.02)

    def test_dependent_starts_flagged(self):
        t = np.linspace(1.0, 5.0, 9)
        curves = [(t, np.exp(-0.4 * t)), (t, np.exp(-0.9 * t))]
        fit = estimate_lambda(curves)
        assert not fit.start_independent

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError):
            estimate_lambda([(np.array([1.0, 2.0]), np.array([0.5, 0.25]))])


class TestPhi:
    def test_normalization_identity(self, harmonic, spec15, interval_domain, stream):
        grid = PhaseGrid.regular(-1, 1, -4, 4, 8, 8)
        law = conditioned_law(harmonic, spec15, interval_domain, ([-0.5], [0.0]),
                              1.0, grid, 4000, stream.child("mu"))
        phi = estimate_phi(harmonic, spec15, interval_domain, grid, t=1.0,
                           M=60, lambda_hat=0.36, stream=stream.child("phi"),
                           mu=law.mass)
        mask = phi.adequate
        assert mask.any()
        # identity holds against mu restricted to adequate cells, renormalized
        mu = law.mass.copy()
        mu[~mask] = 0.0
        mu /= mu.sum()
        dot = float(np.nansum(mu[mask] * phi.phi[mask]))
        assert dot == pytest.approx(1.0, abs=1e-9)
        assert phi.normalization == pytest.approx(1.0, abs=1e-9)

    def test_inadequate_cells_are_nan_not_zero(self, harmonic, spec15,
                                               interval_domain, stream):
        grid = PhaseGrid.regular(-1, 1, -8, 8, 10, 10)
        phi = estimate_phi(harmonic, spec15, interval_domain, grid, t=1.5,
                           M=40, lambda_hat=0.36, stream=stream.child("nan"))
        bad = ~phi.adequate
        if bad.any():
            assert np.isnan(phi.phi[bad]).all()
        good = phi.adequate
        assert np.all(phi.phi[good] > 0)


class TestPushThrough:
    def test_output_is_distribution(self, harmonic, spec15, interval_domain, stream):
        grid = PhaseGrid.regular(-1, 1, -6, 6, 10, 10)
        mu = np.zeros(grid.n_cells)
        center = int(grid.flat_index(np.array([[0.0]]), np.array([[0.0]]))[0])
        mu[center] = 1.0
        pushed = push_through_killed(mu, grid, harmonic, spec15, interval_domain,
                                     s=0.5, M=3000, stream=stream.child("push"))
        assert pushed.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(pushed >= 0)
        # mass spreads off the starting cell
        assert pushed[center] < 1.0
