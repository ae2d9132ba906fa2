"""Drift fields B(x, v) for the kinetic system, with checkable assumptions.

Three structural classes are tracked: Bounded, LinearGrowth, and
PerturbedGradient (B = -grad U + Theta with quantitative dissipation
constants). The constants are not decorative: they feed the Lyapunov
construction and every growth-envelope bound downstream, and
check_assumptions verifies them on a grid before anything else trusts them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "PGradParams",
    "DriftModel",
    "GridSpec",
    "AssumptionReport",
    "AdmissibleAB",
    "builtin_drift",
    "check_assumptions",
    "admissible_ab",
    "BUILTIN_NAMES",
]


@dataclass(frozen=True)
class PGradParams:
    """Perturbed-gradient structure B = -grad U + Theta with its constants.

    The potential maps into [1, inf). Constants certify, for all (x, v):

      -grad U(x) . x <= -m1 U(x) + C1_U
      U(x) >= m2 |x|^q - C2_U                      with q >= 2
      Theta(x,v) . v <= -Gamma |v|^2 + C1_Theta (1 + |x|^ell1)

    plus one of the two perturbation cases:

      B1:  Theta(x,v) . x <= C2_Theta (1 + |v|^2 + |x|^ell2)
           and on each ball |x| <= r, |Theta| <= C_r (1 + |v|)
      B2:  |Theta(x,v)| <= C2_Theta (1 + |v| + |x|^(ell2 - 1))

    with ell1, ell2 in [1, q).
    """

    potential: Callable
    grad_potential: Callable
    theta: Callable
    m1: float
    C1_U: float
    m2: float
    C2_U: float
    q: float
    Gamma: float
    C1_Theta: float
    ell1: float
    theta_case: str
    C2_Theta: float = 0.0
    ell2: float = 1.0

    def __post_init__(self):
        if self.m1 <= 0 or self.m2 <= 0 or self.Gamma <= 0:
            raise ValueError("m1, m2, Gamma must be positive")
        if self.q < 2:
            raise ValueError("q must be >= 2")
        if min(self.C1_U, self.C2_U, self.C1_Theta, self.C2_Theta) < 0:
            raise ValueError("C constants must be nonnegative")
        for ell in (self.ell1, self.ell2):
            if not 1.0 <= ell < self.q:
                raise ValueError(f"exponents ell must lie in [1, q), got {ell}")
        if self.theta_case not in ("B1", "B2"):
            raise ValueError("theta_case must be 'B1' or 'B2'")


@dataclass(frozen=True)
class DriftModel:
    """A drift field with its declared structure.

    func is vectorized: (n, d), (n, d) -> (n, d). growth_constant C certifies
    |B(x,v)| <= C (1 + |x| + |v|) when set; bound_constant certifies
    |B| <= bound_constant for the Bounded class. discontinuities lists scalar
    functions vanishing exactly on declared discontinuity sets, so grid
    checks can avoid evaluating on them.
    """

    name: str
    class_tag: str
    func: Callable
    dim: int
    growth_constant: Optional[float] = None
    bound_constant: Optional[float] = None
    pgrad: Optional[PGradParams] = None
    discontinuities: tuple = ()

    def __post_init__(self):
        if self.class_tag not in ("Bounded", "LinearGrowth", "PerturbedGradient"):
            raise ValueError(f"unknown class_tag {self.class_tag!r}")
        if self.class_tag == "Bounded" and self.bound_constant is None:
            raise ValueError("Bounded models must declare bound_constant")
        if self.class_tag == "PerturbedGradient" and self.pgrad is None:
            raise ValueError("PerturbedGradient models must carry pgrad")

    def __call__(self, x, v):
        return self.func(x, v)


@dataclass(frozen=True)
class GridSpec:
    """Box grid [-radius, radius]^{2d} used by assumption checks."""

    radius: float = 20.0
    points_per_axis: Optional[int] = None  # default: 101 if d == 1 else 21

    def axes(self, dim: int):
        n = self.points_per_axis or (101 if dim == 1 else 21)
        return np.linspace(-self.radius, self.radius, n)


@dataclass
class CheckResult:
    margin: float        # min over grid of (rhs - lhs); >= -tol passes
    witness: tuple       # (x, v) attaining the margin
    passed: bool


@dataclass
class AssumptionReport:
    model: str
    class_tag: str
    checks: dict
    n_points: int
    n_skipped: int
    tol: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())


def _phase_grid(model: DriftModel, grid: GridSpec):
    ax = grid.axes(model.dim)
    mesh = np.meshgrid(*([ax] * (2 * model.dim)), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    x, v = pts[:, : model.dim], pts[:, model.dim :]
    keep = np.ones(len(x), dtype=bool)
    for g in model.discontinuities:
        keep &= np.abs(np.asarray(g(x, v), dtype=float)) > 1e-12
    return x[keep], v[keep], int(np.count_nonzero(~keep))


def check_assumptions(
    model: DriftModel, grid: Optional[GridSpec] = None, tol: float = 1e-9
) -> AssumptionReport:
    """Verify the declared inequalities of a drift model on a grid.

    Parameters
    ----------
    model : DriftModel
    grid : GridSpec, optional
        Defaults to radius 20 with 101 points per axis in dimension 1.
    tol : float
        A margin down to -tol still passes (floating-point slack).

    Returns
    -------
    AssumptionReport
        Per-inequality margins min(rhs - lhs) with witness points. Grid
        points on declared discontinuity sets are skipped; the count is
        reported.

    Notes
    -----
    A grid check is a falsifier, not a proof: it certifies the constants on
    the sampled box only. That is what the downstream constructions consume
    (they are themselves grid-calibrated).
    """
    grid = grid or GridSpec()
    x, v, skipped = _phase_grid(model, grid)
    bx = model(x, v)
    nx = np.linalg.norm(x, axis=1)
    nv = np.linalg.norm(v, axis=1)
    nb = np.linalg.norm(bx, axis=1)
    checks: dict[str, CheckResult] = {}

    def record(name, lhs, rhs):
        gap = rhs - lhs
        i = int(np.argmin(gap))
        checks[name] = CheckResult(
            margin=float(gap[i]),
            witness=(x[i].copy(), v[i].copy()),
            passed=bool(gap[i] >= -tol),
        )

    if model.class_tag == "Bounded":
        record("bounded", nb, np.full_like(nb, float(model.bound_constant)))
    if model.growth_constant is not None:
        record("linear_growth", nb, model.growth_constant * (1.0 + nx + nv))

    p = model.pgrad
    if p is not None:
        u = np.asarray(p.potential(x), dtype=float)
        gu = np.asarray(p.grad_potential(x), dtype=float)
        th = np.asarray(p.theta(x, v), dtype=float)
        record("potential_floor", np.ones_like(u), u)
        record("radial_coercivity", -np.einsum("ij,ij->i", gu, x), -p.m1 * u + p.C1_U)
        record("potential_growth", p.m2 * nx**p.q - p.C2_U, u)
        record(
            "dissipation",
            np.einsum("ij,ij->i", th, v),
            -p.Gamma * nv**2 + p.C1_Theta * (1.0 + nx**p.ell1),
        )
        if p.theta_case == "B1":
            record(
                "perturbation_B1",
                np.einsum("ij,ij->i", th, x),
                p.C2_Theta * (1.0 + nv**2 + nx**p.ell2),
            )
        else:
            record(
                "perturbation_B2",
                np.linalg.norm(th, axis=1),
                p.C2_Theta * (1.0 + nv + nx ** (p.ell2 - 1.0)),
            )
        # drift must actually decompose as -grad U + Theta
        record(
            "decomposition",
            np.linalg.norm(bx - (-gu + th), axis=1),
            np.zeros(len(bx)),
        )

    return AssumptionReport(
        model=model.name,
        class_tag=model.class_tag,
        checks=checks,
        n_points=len(x),
        n_skipped=skipped,
        tol=tol,
    )


@dataclass
class AdmissibleAB:
    """Open admissible interval (0, b_max) for the cross-term weight b."""

    a: float
    b_max: float
    binding: str
    constraints: dict  # name -> upper bound on b implied by that constraint


def admissible_ab(pgrad: PGradParams, a: float) -> AdmissibleAB:
    """Admissible b-range for the Lyapunov form a[U + |v|^2/2] + b x.v.

    Collects every structural constraint as an explicit upper bound on b and
    returns the minimum with its name. All constraints are strict; the open
    interval (0, b_max) is admissible and b_max itself is not.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    cons: dict[str, float] = {"b < a": a}
    if pgrad.q == 2:
        cons["b < m2 a / 2"] = pgrad.m2 * a / 2.0
    ag = a * pgrad.Gamma
    if pgrad.theta_case == "B1":
        cons["b < a Gamma / (1 + C2_Theta)"] = ag / (1.0 + pgrad.C2_Theta)
    elif pgrad.q > 2:
        cons["2b < a Gamma"] = ag / 2.0
    else:
        c2 = pgrad.C2_Theta
        if c2 > 0:
            cons["sqrt(b) < m1 m2 / C2_Theta^2"] = (pgrad.m1 * pgrad.m2 / c2**2) ** 2
        cons["sqrt(b) + b < a Gamma"] = ((np.sqrt(1.0 + 4.0 * ag) - 1.0) / 2.0) ** 2
    binding = min(cons, key=cons.get)
    b_max = cons[binding]
    if not np.isfinite(b_max) or b_max <= 0:
        raise ValueError(f"no admissible b: constraint {binding!r} gives {b_max}")
    return AdmissibleAB(a=a, b_max=float(b_max), binding=binding, constraints=cons)


# ---------------------------------------------------------------------------
# built-in catalog

BUILTIN_NAMES = (
    "harmonic_damped",
    "interface_friction",
    "velocity_threshold",
    "anisotropic_friction",
    "piecewise_field",
    "tanh_force",
    "double_well_damped",
)


def _restoring(k: float):
    return lambda x, v: -k * x


def builtin_drift(name: str, dim: int = 1, **kw) -> DriftModel:
    """Construct one of the built-in drift fields.

    harmonic_damped(k, gamma): -k x - gamma v, perturbed gradient with
        U = 1 + k|x|^2/2, Theta = -gamma v (case B2, q = 2).
    interface_friction(k, gamma_left, gamma_right): damping coefficient
        switches at the interface x_1 = 0; perturbed gradient when both
        coefficients are positive.
    velocity_threshold(k, gamma, v_c): damping active only above speed v_c;
        linear-growth class, discontinuous on |v| = v_c.
    anisotropic_friction(k, gamma): rank-one projection friction
        (v x v / |v|^2) v, defined as 0 at v = 0; linear-growth class.
    piecewise_field(force_minus, force_plus, gamma): constant force flipping
        sign at x_1 = 0 plus optional damping; bounded class when gamma = 0.
    tanh_force(scale): smooth bounded force scale * tanh(x), no damping.
    double_well_damped(gamma, well): U = (|x|^2 - well^2)^2 / 4 + 1 with
        linear damping; perturbed gradient with q = 4 (superlinear drift,
        so no linear growth constant).
    """
    if name == "harmonic_damped":
        k = float(kw.pop("k", 1.0))
        gamma = float(kw.pop("gamma", 1.0))
        _reject_extra(name, kw)
        if k <= 0 or gamma <= 0:
            raise ValueError("harmonic_damped needs k > 0 and gamma > 0")
        pg = PGradParams(
            potential=lambda x: 1.0 + 0.5 * k * _sqnorm(x),
            grad_potential=lambda x: k * np.asarray(x, dtype=float),
            theta=lambda x, v: -gamma * np.asarray(v, dtype=float),
            m1=2.0, C1_U=2.0, m2=k / 2.0, C2_U=0.0, q=2.0,
            Gamma=gamma, C1_Theta=0.0, ell1=1.0,
            theta_case="B2", C2_Theta=gamma, ell2=1.0,
        )
        return DriftModel(
            name=name, class_tag="PerturbedGradient",
            func=lambda x, v: -k * x - gamma * v,
            dim=dim, growth_constant=max(k, gamma), pgrad=pg,
        )

    if name == "interface_friction":
        k = float(kw.pop("k", 1.0))
        gl = float(kw.pop("gamma_left", 0.5))
        gr = float(kw.pop("gamma_right", 2.0))
        _reject_extra(name, kw)

        def gamma_of(x):
            return np.where(x[..., 0] < 0.0, gl, gr)

        def func(x, v):
            return -k * x - gamma_of(x)[..., None] * v

        pg = None
        tag = "LinearGrowth"
        if k > 0 and min(gl, gr) > 0:
            tag = "PerturbedGradient"
            pg = PGradParams(
                potential=lambda x: 1.0 + 0.5 * k * _sqnorm(x),
                grad_potential=lambda x: k * np.asarray(x, dtype=float),
                theta=lambda x, v: -gamma_of(np.asarray(x))[..., None] * v,
                m1=2.0, C1_U=2.0, m2=k / 2.0, C2_U=0.0, q=2.0,
                Gamma=min(gl, gr), C1_Theta=0.0, ell1=1.0,
                theta_case="B2", C2_Theta=max(gl, gr), ell2=1.0,
            )
        return DriftModel(
            name=name, class_tag=tag, func=func, dim=dim,
            growth_constant=max(abs(k), abs(gl), abs(gr)), pgrad=pg,
            discontinuities=(lambda x, v: x[..., 0],),
        )

    if name == "velocity_threshold":
        k = float(kw.pop("k", 1.0))
        gamma = float(kw.pop("gamma", 1.0))
        v_c = float(kw.pop("v_c", 1.0))
        _reject_extra(name, kw)
        if v_c < 0 or gamma < 0:
            raise ValueError("velocity_threshold needs v_c >= 0 and gamma >= 0")

        def func(x, v):
            speed = np.linalg.norm(v, axis=-1, keepdims=True)
            return -k * x - gamma * np.where(speed > v_c, v, 0.0)

        return DriftModel(
            name=name, class_tag="LinearGrowth", func=func, dim=dim,
            growth_constant=max(abs(k), abs(gamma)),
            discontinuities=(
                lambda x, v: np.linalg.norm(v, axis=-1) - v_c,
            ),
        )

    if name == "anisotropic_friction":
        k = float(kw.pop("k", 1.0))
        gamma = float(kw.pop("gamma", 1.0))
        _reject_extra(name, kw)

        def func(x, v):
            # (v x v / |v|^2) v = v away from v = 0, and 0 by convention there
            speed = np.linalg.norm(v, axis=-1, keepdims=True)
            return -k * x - gamma * np.where(speed > 0.0, v, 0.0)

        return DriftModel(
            name=name, class_tag="LinearGrowth", func=func, dim=dim,
            growth_constant=max(abs(k), abs(gamma)),
            discontinuities=(lambda x, v: np.linalg.norm(v, axis=-1),),
        )

    if name == "piecewise_field":
        fm = float(kw.pop("force_minus", 0.5))
        fp = float(kw.pop("force_plus", -0.5))
        gamma = float(kw.pop("gamma", 0.0))
        _reject_extra(name, kw)

        def func(x, v):
            out = -gamma * np.asarray(v, dtype=float)
            out = out.copy()
            out[..., 0] += np.where(x[..., 0] < 0.0, fm, fp)
            return out

        bounded = gamma == 0.0
        return DriftModel(
            name=name,
            class_tag="Bounded" if bounded else "LinearGrowth",
            func=func, dim=dim,
            growth_constant=max(abs(fm), abs(fp), abs(gamma)),
            bound_constant=max(abs(fm), abs(fp)) if bounded else None,
            discontinuities=(lambda x, v: x[..., 0],),
        )

    if name == "tanh_force":
        scale = float(kw.pop("scale", 0.2))
        _reject_extra(name, kw)

        def func(x, v):
            return scale * np.tanh(np.asarray(x, dtype=float))

        return DriftModel(
            name=name, class_tag="Bounded", func=func, dim=dim,
            growth_constant=abs(scale), bound_constant=abs(scale),
        )

    if name == "double_well_damped":
        gamma = float(kw.pop("gamma", 1.0))
        well = float(kw.pop("well", 1.0))
        _reject_extra(name, kw)
        if gamma <= 0 or well <= 0:
            raise ValueError("double_well_damped needs gamma > 0 and well > 0")
        w2 = well * well

        def potential(x):
            return 0.25 * (_sqnorm(x) - w2) ** 2 + 1.0

        def grad_potential(x):
            x = np.asarray(x, dtype=float)
            return (_sqnorm(x) - w2)[..., None] * x

        pg = PGradParams(
            potential=potential,
            grad_potential=grad_potential,
            theta=lambda x, v: -gamma * np.asarray(v, dtype=float),
            m1=2.0, C1_U=0.5 * w2 * w2 + 2.0,
            m2=1.0 / 8.0, C2_U=max(0.0, w2 * w2 / 4.0 - 1.0), q=4.0,
            Gamma=gamma, C1_Theta=0.0, ell1=1.0,
            theta_case="B2", C2_Theta=gamma, ell2=1.0,
        )
        return DriftModel(
            name=name, class_tag="PerturbedGradient",
            func=lambda x, v: -grad_potential(x) - gamma * v,
            dim=dim, growth_constant=None, pgrad=pg,
        )

    raise ValueError(f"unknown drift {name!r}; choose from {BUILTIN_NAMES}")


def _sqnorm(x):
    x = np.asarray(x, dtype=float)
    return np.sum(x * x, axis=-1)


def _reject_extra(name, kw):
    if kw:
        raise TypeError(f"{name} got unexpected parameters {sorted(kw)}")
