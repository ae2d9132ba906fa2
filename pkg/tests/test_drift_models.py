"""Built-in drift fields, assumption checking, and the (a, b) feasibility solve."""

import numpy as np
import pytest

from levykin import (
    GridSpec,
    admissible_ab,
    builtin_drift,
    check_assumptions,
)


def ev(model, x, v):
    """Evaluate a d=1 model at a scalar point, returning a scalar."""
    out = model(np.array([[float(x)]]), np.array([[float(v)]]))
    return float(np.asarray(out).ravel()[0])


class TestBuiltins:
    def test_harmonic_at_origin_is_zero(self, harmonic):
        assert ev(harmonic, 0.0, 0.0) == 0.0

    def test_harmonic_is_linear(self, harmonic):
        assert ev(harmonic, 1.0, 0.0) == pytest.approx(-1.0)
        assert ev(harmonic, 0.0, 2.0) == pytest.approx(-2.0)
        assert ev(harmonic, -0.5, 0.5) == pytest.approx(0.0)

    def test_velocity_threshold_inactive_below_cutoff(self):
        m = builtin_drift("velocity_threshold", k=1.0, gamma=1.0, v_c=1.0)
        # below the cutoff only the restoring force acts
        assert ev(m, 0.3, 0.5) == pytest.approx(-0.3)
        # above it damping kicks in
        assert ev(m, 0.3, 2.0) == pytest.approx(-0.3 - 2.0)

    def test_anisotropic_friction_vanishes_at_rest(self):
        m = builtin_drift("anisotropic_friction", dim=2, k=1.0, gamma=1.0)
        out = m(np.zeros((1, 2)), np.zeros((1, 2)))
        np.testing.assert_array_equal(out, np.zeros((1, 2)))

    def test_tanh_force_bounded(self):
        m = builtin_drift("tanh_force", scale=0.2)
        assert m.class_tag == "Bounded"
        assert m.bound_constant == pytest.approx(0.2)
        assert abs(ev(m, 50.0, 0.0)) <= 0.2
        assert ev(m, 1.0, 0.0) == pytest.approx(0.2 * np.tanh(1.0))

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError):
            builtin_drift("no_such_field")

    def test_unknown_parameter_rejected(self):
        with pytest.raises(TypeError):
            builtin_drift("harmonic_damped", k=1.0, spring=2.0)

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ValueError):
            builtin_drift("velocity_threshold", v_c=-1.0)

    def test_evaluation_is_pure(self, harmonic):
        x = np.array([[0.3], [0.7]])
        v = np.array([[1.0], [-2.0]])
        np.testing.assert_array_equal(harmonic(x, v), harmonic(x, v))


class TestCheckAssumptions:
    def test_harmonic_passes_with_tight_potential_bound(self, harmonic):
        report = check_assumptions(harmonic)
        assert all(c.passed for c in report.checks.values())
        # -grad U . x = -x^2 = -2 U + 2 exactly: margin 0 attained
        assert report.checks["radial_coercivity"].margin == pytest.approx(0.0, abs=1e-9)

    def test_bounded_drift_passes_linear_growth(self):
        m = builtin_drift("piecewise_field", force_minus=1.0, force_plus=-1.0, gamma=0.0)
        report = check_assumptions(m)
        assert all(c.passed for c in report.checks.values())

    def test_report_carries_witness_points(self, harmonic):
        report = check_assumptions(harmonic, grid=GridSpec(radius=5.0))
        for chk in report.checks.values():
            assert len(chk.witness) >= 1

    def test_discontinuity_points_skipped(self):
        m = builtin_drift("velocity_threshold", k=1.0, gamma=1.0, v_c=1.0)
        report = check_assumptions(m)
        assert report.n_skipped >= 0  # points on |v| = v_c avoided by construction
        assert all(c.passed for c in report.checks.values())


class TestAdmissibleAB:
    def test_benchmark_interval(self, harmonic):
        # Gamma=1, m1=2, m2=1/2, C2_Theta=1, q=2, case B2:
        # constraints b<1, b<0.25, sqrt(b)<1, sqrt(b)+b<1 => 0.25 binds
        res = admissible_ab(harmonic.pgrad, a=1.0)
        assert res.b_max == pytest.approx(0.25, rel=1e-9)
        assert "m2" in res.binding and "a" in res.binding  # names b < m2 a / 2

    def test_half_b_max_satisfies_all_constraints(self, harmonic):
        res = admissible_ab(harmonic.pgrad, a=1.0)
        b = res.b_max / 2
        pg = harmonic.pgrad
        assert b < 1.0 * res.a
        assert b < pg.m2 * res.a / 2
        assert np.sqrt(b) < pg.m1 * pg.m2 / pg.C2_Theta**2
        assert np.sqrt(b) + b < res.a * pg.Gamma

    def test_doubling_a_does_not_shrink(self, harmonic):
        b1 = admissible_ab(harmonic.pgrad, a=1.0).b_max
        b2 = admissible_ab(harmonic.pgrad, a=2.0).b_max
        assert b2 >= b1

    def test_interval_collapses_with_vanishing_dissipation(self):
        # case B1 with tiny Gamma forces b < a Gamma / (1 + C2_Theta) ~ 0
        weak = builtin_drift("harmonic_damped", k=1.0, gamma=1e-6)
        pg = weak.pgrad
        res = admissible_ab(pg, a=1.0)
        assert 0 < res.b_max < 1e-5
