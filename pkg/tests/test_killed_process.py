"""Exit detection, survival estimation, and the velocity-escape diagnostic."""

import numpy as np
import pytest

from levykin import (
    Domain,
    PhaseGrid,
    RandomStream,
    box_probe_points,
    empirical_marginal,
    exit_time,
    killed_expectation,
    simulate,
    survival_curve,
    velocity_escape,
)


class TestDomain:
    def test_interval_open_semantics(self, interval_domain):
        inside = interval_domain.contains(np.array([[0.0], [0.999], [-0.999]]))
        assert inside.all()
        boundary = interval_domain.contains(np.array([[1.0], [-1.0], [1.5]]))
        assert not boundary.any()  # boundary counts as exited

    def test_box_and_ball(self):
        box = Domain.box([-1.0, -2.0], [1.0, 2.0])
        assert box.contains(np.array([[0.0, 1.9]]))[0]
        assert not box.contains(np.array([[0.0, 2.0]]))[0]
        ball = Domain.ball([0.0, 0.0], 1.0)
        assert ball.contains(np.array([[0.5, 0.5]]))[0]
        assert not ball.contains(np.array([[1.0, 0.0]]))[0]


class TestExitTime:
    def test_interior_path_censored(self, interval_domain):
        traj = simulate(None, None, ([0.0], [0.0]), 1.0, 0.01, 1, RandomStream(0))
        rec = exit_time(traj, interval_domain)
        assert not rec.exited
        assert rec.sigma == np.inf

    def test_start_outside_exits_at_zero(self, interval_domain):
        traj = simulate(None, None, ([2.0], [0.0]), 1.0, 0.01, 1, RandomStream(0))
        rec = exit_time(traj, interval_domain)
        assert rec.exited and rec.sigma == 0.0

    def test_deterministic_crossing_time(self, interval_domain):
        # x(t) = t with v = 1: hits the boundary x = 1 at t = 1
        traj = simulate(None, None, ([0.0], [1.0]), 2.0, 0.01, 1, RandomStream(0))
        rec = exit_time(traj, interval_domain)
        assert rec.exited
        assert rec.sigma == pytest.approx(1.0, abs=1e-9)
        assert rec.exit_state[0][0] == pytest.approx(1.0, abs=1e-8)

    def test_refinement_preserves_exit(self, interval_domain):
        for step in (0.02, 0.01, 0.005):
            traj = simulate(None, None, ([0.0], [1.0]), 2.0, step, 1, RandomStream(0))
            assert exit_time(traj, interval_domain).exited


class TestSurvival:
    def test_t_zero_inside_is_one(self, harmonic, spec15, interval_domain, stream):
        curve = survival_curve(
            harmonic, spec15, interval_domain, ([-0.5], [0.0]),
            [0.0, 0.5], 300, stream,
        )
        assert curve.estimate[0] == 1.0

    def test_nonincreasing_on_shared_paths(self, harmonic, spec15, interval_domain, stream):
        curve = survival_curve(
            harmonic, spec15, interval_domain, ([-0.5], [0.0]),
            np.linspace(0.0, 3.0, 13), 2000, stream.child("mono"),
        )
        assert np.all(np.diff(curve.estimate) <= 1e-15)

    def test_ci_brackets_estimate(self, harmonic, spec15, interval_domain, stream):
        curve = survival_curve(
            harmonic, spec15, interval_domain, ([-0.5], [0.0]),
            [1.0, 2.0], 500, stream.child("ci"),
        )
        assert np.all(curve.ci_lo <= curve.estimate)
        assert np.all(curve.estimate <= curve.ci_hi)


class TestKilledExpectation:
    def test_f_zero_is_zero(self, harmonic, spec15, interval_domain, stream):
        est, se = killed_expectation(
            lambda x, v: np.zeros(len(x)), harmonic, spec15, interval_domain,
            ([-0.5], [0.0]), 1.0, 400, stream, f_bound=0.0,
        )
        assert est == 0.0 and se == 0.0

    def test_indicator_reduces_to_survival(self, harmonic, spec15, interval_domain, stream):
        # same stream: f = 1 must reproduce the survival estimate exactly
        t = 1.0
        est, _ = killed_expectation(
            lambda x, v: np.ones(len(x)), harmonic, spec15, interval_domain,
            ([-0.5], [0.0]), t, 600, stream.child("same"), f_bound=1.0,
        )
        curve = survival_curve(
            harmonic, spec15, interval_domain, ([-0.5], [0.0]),
            [t], 600, stream.child("same"),
        )
        assert est == pytest.approx(curve.estimate[0], abs=1e-12)
        assert est <= 1.0

    def test_nonnegative_f_nonnegative_estimate(self, harmonic, spec15, interval_domain, stream):
        est, _ = killed_expectation(
            lambda x, v: np.abs(v[:, 0]), harmonic, spec15, interval_domain,
            ([-0.5], [0.0]), 0.5, 400, stream.child("pos"), f_bound=None,
        )
        assert est >= 0.0


class TestVelocityEscape:
    def test_r_zero_is_survival(self, harmonic, spec15, interval_domain, stream):
        starts = box_probe_points([-0.5, -1.0], [0.5, 1.0])
        table = velocity_escape(
            harmonic, spec15, interval_domain, starts, 0.2,
            [0.0, 5.0], 500, stream.child("r0"),
        )
        # R = 0: the event is plain survival, so the sup is a probability near S(t)
        assert 0.0 < table.estimate[0] <= 1.0

    def test_nonincreasing_in_R_exactly(self, harmonic, spec15, interval_domain, stream):
        starts = box_probe_points([-0.5, -1.0], [0.5, 1.0])
        table = velocity_escape(
            harmonic, spec15, interval_domain, starts, 0.2,
            [2.0, 5.0, 10.0, 20.0, 50.0], 1000, stream.child("esc"),
        )
        assert np.all(np.diff(table.estimate) <= 0.0)  # shared paths: exact nesting

    def test_threshold_columns_flagged(self, harmonic, spec15, interval_domain, stream):
        starts = box_probe_points([-0.5, -1.0], [0.5, 1.0])
        table = velocity_escape(
            harmonic, spec15, interval_domain, starts, 0.2,
            [5.0, 20.0, 50.0], 300, stream.child("thr"),
        )
        # g(t) = 2t - (e^{Ct} - 1)/C stays positive at t = 0.2 for C = 2
        assert table.thresholds_applicable
        # pushing past a larger R takes more noise in both regimes
        assert np.all(np.diff(table.threshold_small) > 0)
        assert np.all(np.diff(table.threshold_large) > 0)

    def test_thresholds_inapplicable_beyond_positivity_root(
        self, harmonic, spec15, interval_domain, stream
    ):
        starts = [([0.0], [0.0])]
        table = velocity_escape(
            harmonic, spec15, interval_domain, starts, 1.0,
            [5.0], 100, stream.child("na"),
        )
        assert not table.thresholds_applicable
        assert np.isnan(table.threshold_large).all()
        assert np.isfinite(table.estimate).all()  # estimation still runs


class TestMarginal:
    def test_mass_accounting_is_exact(self, harmonic, spec15, stream):
        grid = PhaseGrid.regular(-4, 4, -6, 6, 16, 16)
        hist = empirical_marginal(
            harmonic, spec15, ([0.0], [0.0]), 1.0, grid, 4000, stream.child("h"),
        )
        assert hist.mass.sum() + hist.escaped_fraction == pytest.approx(1.0, abs=1e-12)

    def test_no_atom_at_unit_time(self, harmonic, spec15, stream):
        grid = PhaseGrid.regular(-4, 4, -6, 6, 16, 16)
        hist = empirical_marginal(
            harmonic, spec15, ([0.0], [0.0]), 1.0, grid, 4000, stream.child("a"),
        )
        assert hist.mass.max() < 0.5

    def test_short_time_concentrates_at_start(self, harmonic, spec15, stream):
        grid = PhaseGrid.regular(-4, 4, -6, 6, 16, 16)
        hist = empirical_marginal(
            harmonic, spec15, ([0.1], [0.2]), 1e-3, grid, 3000, stream.child("c"),
        )
        start_cell = int(grid.flat_index(np.array([[0.1]]), np.array([[0.2]]))[0])
        assert hist.mass.argmax() == start_cell
