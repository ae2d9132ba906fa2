"""Lyapunov construction and the quadrature-based generator.

The generator is validated against the only case with a closed form: pure
noise acting on cos(xi v), where the nonlocal operator returns
-|xi|^alpha cos(xi v). Everything else is checked through structure
(linearity, scaling invariance, sign patterns).
"""

import numpy as np
import pytest

from levykin import (
    GeneratorProbe,
    QuadSpec,
    RandomStream,
    StableNoiseSpec,
    apply_generator,
    build_lyapunov,
    builtin_drift,
    drift_condition_report,
    fit_growth_rate,
    supermartingale_probe,
)


@pytest.fixture
def W_bench(harmonic):
    return build_lyapunov(harmonic.pgrad, a=1.0, b=0.1, p=0.5, alpha=1.5)


def cos_probe(xi):
    return GeneratorProbe(
        value=lambda x, v: np.cos(xi * v[..., 0]),
        grad_x=lambda x, v: np.zeros_like(x),
        grad_v=lambda x, v: np.stack([-xi * np.sin(xi * v[..., 0])], axis=-1),
        env_const=2.0,
        env_power=0.0,
        oscillation=xi,
    )


class TestBuildLyapunov:
    def test_benchmark_construction(self, W_bench):
        assert W_bench.shift > 0
        m, M = W_bench.coercivity
        assert 0 < m <= M

    def test_floor_of_one(self, W_bench):
        xs = np.linspace(-20, 20, 41)
        vals = W_bench.value(xs[:, None], np.zeros((41, 1)))
        assert np.all(vals >= 1.0)

    def test_coercive_along_rays(self, W_bench):
        rs = np.array([1.0, 5.0, 10.0, 20.0])
        along_x = W_bench.value(rs[:, None], np.zeros((4, 1)))
        along_v = W_bench.value(np.zeros((4, 1)), rs[:, None])
        assert np.all(np.diff(along_x) > 0)
        assert np.all(np.diff(along_v) > 0)

    def test_gradient_vanishes_at_origin(self, W_bench):
        g = W_bench.grad_v(np.zeros((1, 1)), np.zeros((1, 1)))
        np.testing.assert_allclose(g, 0.0)

    def test_gradient_matches_finite_differences(self, W_bench):
        x = np.array([[0.7]])
        v = np.array([[1.3]])
        h = 1e-6
        num = (W_bench.value(x, v + h) - W_bench.value(x, v - h)) / (2 * h)
        ana = W_bench.grad_v(x, v)[:, 0]
        assert ana[0] == pytest.approx(num[0], rel=1e-6)

    def test_b_zero_decouples(self, harmonic):
        W = build_lyapunov(harmonic.pgrad, a=1.0, b=0.0, p=0.5, alpha=1.5)
        # no x.v coupling: grad_v is proportional to v alone
        g = W.grad_v(np.array([[3.0]]), np.array([[0.0]]))
        np.testing.assert_allclose(g, 0.0, atol=1e-14)

    def test_inadmissible_b_rejected(self, harmonic):
        with pytest.raises(ValueError):
            build_lyapunov(harmonic.pgrad, a=1.0, b=0.3, p=0.5, alpha=1.5)

    def test_p_must_stay_below_alpha(self, harmonic):
        with pytest.raises(ValueError):
            build_lyapunov(harmonic.pgrad, a=1.0, b=0.1, p=1.6, alpha=1.5)


class TestApplyGenerator:
    def test_constant_function_gives_zero(self, spec15):
        probe = GeneratorProbe(
            value=lambda x, v: np.ones(x.shape[:-1]),
            grad_x=lambda x, v: np.zeros_like(x),
            grad_v=lambda x, v: np.zeros_like(v),
            env_const=1.0,
            env_power=0.0,
        )
        out = apply_generator(probe, None, spec15, ([0.3], [0.4]))
        assert out == pytest.approx(0.0, abs=1e-8)

    def test_pure_transport(self, spec15):
        # W = x: only v . grad_x W survives
        probe = GeneratorProbe(
            value=lambda x, v: x[..., 0],
            grad_x=lambda x, v: np.ones_like(x),
            grad_v=lambda x, v: np.zeros_like(v),
            env_const=1.0,
            env_power=0.0,
        )
        out = apply_generator(probe, None, spec15, ([0.0], [0.7]))
        assert out == pytest.approx(0.7, abs=1e-8)

    @pytest.mark.parametrize("alpha", [0.8, 1.2, 1.5, 1.9])
    @pytest.mark.parametrize("xi", [0.5, 1.0, 2.0])
    def test_characteristic_exponent_recovered(self, alpha, xi):
        spec = StableNoiseSpec(alpha=alpha, dim=1)
        out = apply_generator(cos_probe(xi), None, spec, ([0.0], [0.0]))
        assert out == pytest.approx(-abs(xi) ** alpha, abs=1e-4)

    def test_linearity(self, spec15):
        xi1, xi2 = 0.5, 2.0
        point = ([0.0], [0.3])
        combo = GeneratorProbe(
            value=lambda x, v: 2 * np.cos(xi1 * v[..., 0]) + 3 * np.cos(xi2 * v[..., 0]),
            grad_x=lambda x, v: np.zeros_like(x),
            grad_v=lambda x, v: np.stack(
                [-2 * xi1 * np.sin(xi1 * v[..., 0]) - 3 * xi2 * np.sin(xi2 * v[..., 0])],
                axis=-1,
            ),
            env_const=5.0,
            env_power=0.0,
            oscillation=xi2,
        )
        lhs = apply_generator(combo, None, spec15, point)
        rhs = 2 * apply_generator(cos_probe(xi1), None, spec15, point) + 3 * apply_generator(
            cos_probe(xi2), None, spec15, point
        )
        assert lhs == pytest.approx(rhs, abs=5e-4)

    def test_drift_term_included(self, harmonic, spec15):
        # drift adds exactly B(x,v) . grad_v W on top of the noise part
        xi, x0, v0 = 1.0, 0.5, 1.0
        probe = cos_probe(xi)
        with_drift = apply_generator(probe, harmonic, spec15, ([x0], [v0]))
        without = apply_generator(probe, None, spec15, ([x0], [v0]))
        b = -x0 - v0
        want = b * (-xi * np.sin(xi * v0))
        assert with_drift - without == pytest.approx(want, abs=1e-6)

    def test_super_alpha_growth_rejected(self, spec15):
        # W ~ v^2 grows too fast for the tail bound at alpha = 1.5
        probe = GeneratorProbe(
            value=lambda x, v: 0.5 * v[..., 0] ** 2,
            grad_x=lambda x, v: np.zeros_like(x),
            grad_v=lambda x, v: v.copy(),
            env_const=2.0,
            env_power=2.0,
        )
        with pytest.raises(ValueError):
            apply_generator(probe, None, spec15, ([0.0], [1.0]))


class TestDriftCondition:
    def test_benchmark_report_negative_tail(self, harmonic, spec15, W_bench):
        report = drift_condition_report(
            W_bench, harmonic, spec15, radii=[15.0, 20.0, 25.0],
            samples_per_shell=32, stream=RandomStream(7),
        )
        assert np.all(report.sup_ratio <= -report.c_hat)
        assert report.c_hat > 0
        assert report.n_failed == 0
        assert np.isfinite(report.inner_bound)

    def test_scaling_invariance_of_ratio(self, harmonic, spec15, W_bench):
        # the ratio L W / W is invariant under W -> kappa W; exercised
        # through the report by comparing two explicit points
        quad = QuadSpec(tol=1e-6)
        pt = ([12.0], [9.0])
        base = apply_generator(W_bench, harmonic, spec15, pt, quad=quad)
        w_val = float(W_bench.value(np.array([[12.0]]), np.array([[9.0]]))[0])
        # ratio from raw pieces equals report-style ratio at the same point
        assert base / w_val < 0  # dissipative at large radius

    def test_larger_p_still_passes(self, harmonic, spec15):
        W = build_lyapunov(harmonic.pgrad, a=1.0, b=0.1, p=0.9 * 1.5, alpha=1.5)
        report = drift_condition_report(
            W, harmonic, spec15, radii=[20.0], samples_per_shell=32,
            stream=RandomStream(8),
        )
        assert report.sup_ratio[0] < 0


class TestSupermartingaleProbe:
    def test_trivial_level_below_start(self, harmonic, spec15, W_bench, stream):
        w0 = float(W_bench.value(np.array([[-0.5]]), np.array([[0.0]]))[0])
        probe = supermartingale_probe(
            W_bench, harmonic, spec15, ([-0.5], [0.0]),
            [0.5 * w0], 1.0, 200, stream, D_p=1.0,
        )
        assert probe.bound[0] >= 1.0
        assert probe.passed

    def test_estimates_below_bound(self, harmonic, spec15, W_bench, stream):
        w0 = float(W_bench.value(np.array([[-0.5]]), np.array([[0.0]]))[0])
        levels = [2 * w0, 10 * w0, 100 * w0]
        probe = supermartingale_probe(
            W_bench, harmonic, spec15, ([-0.5], [0.0]),
            levels, 1.0, 2000, stream.child("sm"),
        )
        assert probe.passed
        assert np.all(probe.estimate <= probe.bound)
        assert probe.D_p > 0

    def test_growth_rate_fit_finite(self, harmonic, spec15, W_bench):
        D = fit_growth_rate(W_bench, harmonic, spec15, radius=10.0, n_axis=7)
        assert np.isfinite(D) and D > 0
