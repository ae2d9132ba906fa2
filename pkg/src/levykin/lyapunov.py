"""Lyapunov construction and the full generator applied by quadrature.

The generator of the kinetic process splits as

    L W(x,v) = v . grad_x W + B(x,v) . grad_v W + S_v W(x,v)

where S_v acts on the velocity only:

    S_v W = int [ W(x, v+z) - W(x,v) - z . grad_v W(x,v) 1_{|z| <= 1} ] nu(dz).

The measure is rotationally symmetric, so after pairing z with -z the
compensator term drops and S_v becomes a radial integral of the symmetric
second difference D2(r) = W(v + r u) + W(v - r u) - 2 W(v), which is what
the quadrature below evaluates (inner Taylor behaviour and power tails are
handled by the helpers in quadrature.py). Everything here supports d = 1
and d = 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .drift_models import DriftModel, PGradParams, admissible_ab
from .quadrature import capped_edges, panel_integrate, radial_fractional_integral
from .rng import RandomStream
from .stable_noise import StableNoiseSpec, standard_increment
from .integrator import euler_jump_step, CHUNK

__all__ = [
    "LyapunovFunction",
    "GeneratorProbe",
    "QuadSpec",
    "build_lyapunov",
    "apply_generator",
    "DriftConditionReport",
    "drift_condition_report",
    "fit_growth_rate",
    "SupermartingaleProbe",
    "supermartingale_probe",
]


@dataclass(frozen=True)
class QuadSpec:
    tol: float = 1e-5
    r_mid: float = 1e-3       # curvature-head cutover for the inner integral
    order: int = 12
    angular_order: int = 32   # d = 2 only
    max_panels: int = 6_000_000


@dataclass
class GeneratorProbe:
    """Ad-hoc test function for apply_generator.

    value/grad_x/grad_v are vectorized over (n, d) inputs. The tail envelope
    certifies |value(x, v+z) - value(x, v)| <= env_const (1 + |z|)^env_power
    for the points it will be probed at; env_power must stay below alpha.
    oscillation > 0 caps quadrature panel widths at a quarter period
    (pi / (2 oscillation)) so oscillatory integrands stay resolved.
    """

    value: Callable
    grad_x: Callable
    grad_v: Callable
    env_const: float
    env_power: float
    oscillation: float = 0.0

    def tail_envelope(self, x, v):
        return self.env_const, self.env_power


@dataclass
class LyapunovFunction:
    """W_p = F^{p/2} with F = a[U + |v|^2/2] + b x.v + shift >= 1."""

    pgrad: PGradParams
    a: float
    b: float
    p: float
    shift: float
    coercivity: tuple  # (m, M) fitted on the build grid
    oscillation: float = 0.0

    def F(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        u = np.asarray(self.pgrad.potential(x), dtype=float)
        return (
            self.a * (u + 0.5 * np.sum(v * v, axis=-1))
            + self.b * np.sum(x * v, axis=-1)
            + self.shift
        )

    def value(self, x, v):
        return self.F(x, v) ** (self.p / 2.0)

    __call__ = value

    def _prefactor(self, x, v):
        return (self.p / 2.0) * self.F(x, v) ** (self.p / 2.0 - 1.0)

    def grad_x(self, x, v):
        gu = np.asarray(self.pgrad.grad_potential(np.asarray(x, dtype=float)), dtype=float)
        return self._prefactor(x, v)[..., None] * (self.a * gu + self.b * np.asarray(v, dtype=float))

    def grad_v(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return self._prefactor(x, v)[..., None] * (self.a * v + self.b * x)

    def tail_envelope(self, x, v):
        """(C_W, p) with |W(x, v+z) - W(x, v)| <= C_W (1 + |z|)^p.

        F(x, v+z) <= F (1 + c1 |z| + c2 |z|^2) with c1 = (a|v| + b|x|)/F and
        c2 = a/(2F), hence F(x, v+z) <= F (q (1+|z|))^2 for q = max(1, c1,
        sqrt(c2)) and W(x, v+z) <= W q^p (1+|z|)^p.
        """
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        f = float(self.F(x, v))
        c1 = (self.a * float(np.linalg.norm(v)) + self.b * float(np.linalg.norm(x))) / f
        q = max(1.0, c1, math.sqrt(self.a / (2.0 * f)))
        return f ** (self.p / 2.0) * q**self.p, self.p


def build_lyapunov(
    pgrad: PGradParams,
    a: float,
    b: float,
    p: float,
    grid_radius: float = 30.0,
    grid_points: int = 121,
    alpha: Optional[float] = None,
    dim: int = 1,
) -> LyapunovFunction:
    """Construct W_p, with the shift fixed by grid minimization of F_0.

    b must lie in [0, b_max) from admissible_ab (b = 0 is the degenerate
    Hamiltonian case, allowed for diagnostics). The shift is
    1 + 1.2 max(0, -min F_0) so that F >= 1 holds with a 20% safety margin
    on the grid; a negative grid minimum attained on the grid boundary
    raises, since that signals F_0 unbounded below (inadmissible (a, b)).
    """
    if alpha is not None and not 0.0 < p < alpha:
        raise ValueError(f"p must lie in (0, alpha), got p={p} alpha={alpha}")
    if p <= 0:
        raise ValueError("p must be positive")
    if b < 0:
        raise ValueError("b must be nonnegative")
    if b > 0:
        adm = admissible_ab(pgrad, a)
        if b >= adm.b_max:
            raise ValueError(
                f"b={b} outside admissible interval (0, {adm.b_max}) "
                f"(binding constraint: {adm.binding})"
            )
    ax = np.linspace(-grid_radius, grid_radius, grid_points)
    mesh = np.meshgrid(*([ax] * (2 * dim)), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    x, v = pts[:, :dim], pts[:, dim:]
    u = np.asarray(pgrad.potential(x), dtype=float)
    f0 = a * (u + 0.5 * np.sum(v * v, axis=1)) + b * np.sum(x * v, axis=1)
    i_min = int(np.argmin(f0))
    f0_min = float(f0[i_min])
    on_boundary = bool(np.any(np.abs(np.abs(pts[i_min]) - grid_radius) < 1e-12))
    if f0_min < 0 and on_boundary:
        raise ValueError(
            "F_0 minimum is negative on the grid boundary: F_0 looks "
            "unbounded below, (a, b) violates the admissibility structure"
        )
    shift = 1.0 + 1.2 * max(0.0, -f0_min)
    f = f0 + shift
    ham = u + np.sum(v * v, axis=1)
    m_lo = float(np.min((f - 1.0) / ham))
    m_hi = float(np.max(f / ham))
    return LyapunovFunction(
        pgrad=pgrad, a=a, b=b, p=p, shift=shift, coercivity=(m_lo, m_hi)
    )


def _tail_z_max(c: float, alpha: float, env_const: float, env_power: float,
                budget: float, angular_measure: float) -> float:
    """Smallest Z with remainder bound <= budget for the truncated tail.

    Remainder of int_Z^inf 2 env (1+r)^q c r^{-1-alpha} dr (times the
    angular measure), bounded via (1+r)^q <= ((1+1/Z) r)^q.
    """
    if env_power >= alpha:
        raise ValueError(
            f"tail envelope power {env_power} >= alpha {alpha}: "
            "no quadrature tail bound available"
        )
    if env_const == 0.0:
        return 1.0
    gap = alpha - env_power
    z = (2.0 * env_const * c * angular_measure / (gap * budget)) ** (1.0 / gap)
    z = max(z, 1.0)
    # one correction pass for the (1 + 1/Z)^q factor
    z = ((1.0 + 1.0 / z) ** env_power * 2.0 * env_const * c * angular_measure
         / (gap * budget)) ** (1.0 / gap)
    return max(z, 1.0)


def _nonlocal_term(W, x, v, spec: StableNoiseSpec, quad: QuadSpec) -> float:
    """S_v W at one point by symmetric-second-difference quadrature."""
    alpha, c, d = spec.alpha, spec.c_alpha_d, spec.dim
    x = np.asarray(x, dtype=float).reshape(d)
    v = np.asarray(v, dtype=float).reshape(d)
    w0 = float(np.asarray(W.value(x[None, :], v[None, :]), dtype=float).ravel()[0])

    env_const, env_power = W.tail_envelope(x, v)
    osc = getattr(W, "oscillation", 0.0)
    # half-period cap: a 12-node panel resolves half an oscillation to far
    # below the tolerance, and the tail cut dominates the budget anyway
    cap = math.pi / osc if osc > 0 else None

    if d == 1:
        dirs = np.array([[1.0]])
        ang_w = np.array([1.0])
        ang_measure = 1.0
    elif d == 2:
        # average the second difference over directions on the half circle
        nodes, weights = np.polynomial.legendre.leggauss(quad.angular_order)
        theta = 0.5 * math.pi * (nodes + 1.0)
        ang_w = 0.5 * math.pi * weights
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        ang_measure = math.pi
    else:
        raise ValueError("generator quadrature supports d = 1 and d = 2 only")

    # the tail estimate is a hard analytic bound while the panel error is
    # far smaller in practice, so the tail gets most of the budget
    z_max = _tail_z_max(c, alpha, env_const, env_power, 0.8 * quad.tol, ang_measure)
    if cap is not None and (z_max - quad.r_mid) / cap > quad.max_panels:
        raise RuntimeError(
            f"quadrature non-convergence: {int((z_max - quad.r_mid) / cap)} "
            f"oscillation-capped panels exceed the limit {quad.max_panels}"
        )

    def second_diff(r):
        r = np.asarray(r, dtype=float)
        total = np.zeros_like(r)
        xs = np.broadcast_to(x, (len(r), d))
        for u, wgt in zip(dirs, ang_w):
            vp = v[None, :] + r[:, None] * u[None, :]
            vm = v[None, :] - r[:, None] * u[None, :]
            total += wgt * (
                np.asarray(W.value(xs, vp), dtype=float)
                + np.asarray(W.value(xs, vm), dtype=float)
                - 2.0 * w0
            )
        return total

    val = radial_fractional_integral(
        second_diff, alpha, z_max, r_mid=quad.r_mid, width_cap=cap, order=quad.order
    )
    return c * val


def apply_generator(
    W,
    model: Optional[DriftModel],
    spec: StableNoiseSpec,
    point,
    quad: Optional[QuadSpec] = None,
) -> float:
    """Full generator (transport + drift + nonlocal) of W at one point.

    W is a LyapunovFunction or GeneratorProbe (vectorized value/grad_x/
    grad_v plus a tail envelope). model=None drops the drift term.
    """
    quad = quad or QuadSpec()
    d = spec.dim
    x = np.asarray(point[0], dtype=float).reshape(1, d)
    v = np.asarray(point[1], dtype=float).reshape(1, d)
    gx = np.asarray(W.grad_x(x, v), dtype=float).reshape(d)
    gv = np.asarray(W.grad_v(x, v), dtype=float).reshape(d)
    out = float(np.dot(v[0], gx))
    if model is not None:
        b = np.asarray(model(x, v), dtype=float).reshape(d)
        out += float(np.dot(b, gv))
    out += _nonlocal_term(W, x[0], v[0], spec, quad)
    return out


@dataclass
class DriftConditionReport:
    radii: np.ndarray
    sup_ratio: np.ndarray       # per shell: sup of L W_p / W_p
    argmax: list                # per shell: (x, v) attaining the sup
    n_failed: int
    n_points: int
    c_hat: float                # -max ratio over the outer three shells
    inner_bound: float          # max ratio over all shells (the D_p side)

    @property
    def passed(self) -> bool:
        frac_ok = self.n_failed <= 0.01 * self.n_points
        return frac_ok and self.c_hat > 0.0 and np.isfinite(self.inner_bound)


def _shell_points(radius: float, count: int, dim: int, stream: RandomStream) -> np.ndarray:
    """Deterministic sample of the joint sphere |(x, v)| = radius."""
    if dim == 1:
        theta = 2.0 * math.pi * (np.arange(count) + 0.37) / count
        return radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    g = stream.child("shell", int(radius * 1e6)).generator().standard_normal((count, 2 * dim))
    return radius * g / np.linalg.norm(g, axis=1, keepdims=True)


def drift_condition_report(
    W: LyapunovFunction,
    model: DriftModel,
    spec: StableNoiseSpec,
    radii,
    samples_per_shell: int = 32,
    quad: Optional[QuadSpec] = None,
    stream: Optional[RandomStream] = None,
) -> DriftConditionReport:
    """sup of L W_p / W_p over joint-norm shells |(x, v)| = r.

    Passes when the outer three shells have strictly negative sup (the
    drift condition's -c_p) and at most 1% of point evaluations failed.
    Shells use the joint phase-space norm since the dissipation limit is
    taken along |(x, v)| -> infinity.
    """
    if samples_per_shell < 32:
        raise ValueError("shells need >= 32 samples")
    radii = np.asarray(sorted(radii), dtype=float)
    stream = stream or RandomStream(0)
    d = spec.dim
    sup_ratio = np.full(len(radii), -np.inf)
    argmax: list = [None] * len(radii)
    failed = 0
    total = 0
    for i, r in enumerate(radii):
        pts = _shell_points(float(r), samples_per_shell, d, stream)
        for z in pts:
            total += 1
            xx, vv = z[:d], z[d:]
            try:
                num = apply_generator(W, model, spec, (xx, vv), quad)
            except (RuntimeError, ValueError):
                failed += 1
                continue
            ratio = num / float(W.value(xx[None, :], vv[None, :])[0])
            if ratio > sup_ratio[i]:
                sup_ratio[i] = ratio
                argmax[i] = (xx.copy(), vv.copy())
    c_hat = -float(np.max(sup_ratio[-3:])) if len(radii) >= 3 else -float(sup_ratio[-1])
    return DriftConditionReport(
        radii=radii, sup_ratio=sup_ratio, argmax=argmax, n_failed=failed,
        n_points=total, c_hat=c_hat, inner_bound=float(np.max(sup_ratio)),
    )


def fit_growth_rate(
    W: LyapunovFunction,
    model: DriftModel,
    spec: StableNoiseSpec,
    radius: float = 20.0,
    n_axis: int = 21,
    quad: Optional[QuadSpec] = None,
) -> float:
    """D_p estimate: sup of L W_p / W_p over a coarse box grid.

    The ratio tends to a negative limit at infinity, so a box covering the
    transition region captures the sup; this is a fitted constant, with no
    sharpness claim.
    """
    if spec.dim != 1:
        raise ValueError("growth-rate fit implemented for d = 1")
    ax = np.linspace(-radius, radius, n_axis)
    best = -np.inf
    for xv in ax:
        for vv in ax:
            xx = np.array([xv])
            uu = np.array([vv])
            num = apply_generator(W, model, spec, (xx, uu), quad)
            ratio = num / float(W.value(xx[None, :], uu[None, :])[0])
            best = max(best, ratio)
    return float(best)


@dataclass
class SupermartingaleProbe:
    R_levels: np.ndarray
    estimate: np.ndarray     # P[zeta_R <= t] at grid resolution
    bound: np.ndarray        # W_p(x0) e^{D_p t} / R
    D_p: float
    passed: bool


def supermartingale_probe(
    W: LyapunovFunction,
    model: DriftModel,
    spec: StableNoiseSpec,
    initial,
    R_levels,
    t: float,
    M: int,
    stream: RandomStream,
    D_p: Optional[float] = None,
    step: float = 0.01,
) -> SupermartingaleProbe:
    """Check P[sup_{s<=t} W_p(X_s) >= R] <= W_p(x0) e^{D_p t} / R per level.

    The left side is estimated at grid times only, which can only lower it,
    and the right side is a rigorous supermartingale bound, so an estimate
    above the bound indicates a bug (in the construction, D_p, or the
    integrator). D_p defaults to a coarse-grid fit (fit_growth_rate),
    floored at 0 since e^{D_p t} with negative D_p would strengthen the
    bound beyond what Doob gives for the stopped process.
    """
    if D_p is None:
        D_p = fit_growth_rate(W, model, spec)
    D_eff = max(0.0, float(D_p))
    d = spec.dim
    x0 = np.broadcast_to(np.asarray(initial[0], dtype=float), (d,))
    v0 = np.broadcast_to(np.asarray(initial[1], dtype=float), (d,))
    R_levels = np.asarray(R_levels, dtype=float)
    w_start = float(W.value(x0[None, :], v0[None, :])[0])

    n_steps = int(np.ceil(t / step - 1e-12))
    crossed = np.zeros((M, len(R_levels)), dtype=bool)
    for c0 in range(0, M, CHUNK):
        c1 = min(c0 + CHUNK, M)
        n = c1 - c0
        gen = stream.child("super", c0 // CHUNK).generator()
        cx = np.tile(x0, (n, 1))
        cv = np.tile(v0, (n, 1))
        run_max = np.full(n, w_start)
        for k in range(n_steps):
            h = min(step, t - k * step)
            dl = standard_increment(spec, n, gen) * h ** (1.0 / spec.alpha)
            cx, cv, _ = euler_jump_step(model, cx, cv, h, dl)
            run_max = np.maximum(run_max, W.value(cx, cv))
        crossed[c0:c1] = run_max[:, None] >= R_levels[None, :]

    est = crossed.mean(axis=0)
    bound = w_start * math.exp(D_eff * t) / R_levels
    return SupermartingaleProbe(
        R_levels=R_levels, estimate=est, bound=bound, D_p=float(D_p),
        passed=bool(np.all(est <= bound + 1e-12)),
    )
