"""Killing at the spatial boundary: exit times, survival, escape diagnostics.

The killed process lives on D = O x R^d: only the position component can
trigger killing, and O is open, so boundary points count as exited. All
estimators here share one streaming kernel so that survival, killed
expectations, and escape tables computed on the same seed use literally the
same trajectories (their nesting identities then hold exactly, not just in
distribution).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .drift_models import DriftModel
from .grids import PhaseGrid
from .integrator import TRUNCATION_RADIUS, TrajectoryBatch, euler_jump_step
from .rng import RandomStream
from .stable_noise import StableNoiseSpec, standard_increment, wilson_interval

__all__ = [
    "Domain",
    "ExitRecord",
    "SurvivalCurve",
    "EscapeTable",
    "MarginalHistogram",
    "exit_time",
    "survival_curve",
    "killed_expectation",
    "velocity_escape",
    "empirical_marginal",
    "stream_killed",
    "export_curve_csv",
]

# interior subsamples per step interval used for crossing detection on
# non-convex domains (convex domains need endpoints only)
_NONCONVEX_SUBSAMPLES = 4


@dataclass(frozen=True)
class Domain:
    """Open position domain O with vectorized membership.

    contains takes (n, d) positions and returns (n,) booleans, strict
    inequalities throughout (open-set semantics). convex=True lets crossing
    detection skip interior subsampling.
    """

    contains: Callable
    kind: str
    dim: int
    boundary_refine: float = 1e-10
    convex: bool = False
    radius_bound: float = float("nan")  # sup_{x in O} |x|, nan if unknown

    @classmethod
    def interval(cls, lo: float, hi: float, boundary_refine: float = 1e-10) -> "Domain":
        if not lo < hi:
            raise ValueError("interval needs lo < hi")
        return cls(
            contains=lambda x: (x[..., 0] > lo) & (x[..., 0] < hi),
            kind="interval", dim=1, boundary_refine=boundary_refine,
            convex=True, radius_bound=max(abs(lo), abs(hi)),
        )

    @classmethod
    def box(cls, lo, hi, boundary_refine: float = 1e-10) -> "Domain":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if not np.all(lo < hi):
            raise ValueError("box needs lo < hi componentwise")
        return cls(
            contains=lambda x: np.all((x > lo) & (x < hi), axis=-1),
            kind="box", dim=len(lo), boundary_refine=boundary_refine,
            convex=True,
            radius_bound=float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi)))),
        )

    @classmethod
    def ball(cls, center, radius: float, boundary_refine: float = 1e-10) -> "Domain":
        center = np.asarray(center, dtype=float)
        return cls(
            contains=lambda x: np.linalg.norm(x - center, axis=-1) < radius,
            kind="ball", dim=len(center), boundary_refine=boundary_refine,
            convex=True, radius_bound=float(np.linalg.norm(center) + radius),
        )

    @classmethod
    def union(cls, *parts: "Domain") -> "Domain":
        if not parts:
            raise ValueError("union needs at least one part")
        dim = parts[0].dim
        if any(p.dim != dim for p in parts):
            raise ValueError("union parts must share dimension")

        def contains(x):
            out = parts[0].contains(x)
            for p in parts[1:]:
                out = out | p.contains(x)
            return out

        return cls(
            contains=contains, kind="union", dim=dim,
            boundary_refine=min(p.boundary_refine for p in parts),
            convex=False,
            radius_bound=max(p.radius_bound for p in parts),
        )

    @classmethod
    def predicate(
        cls, fn: Callable, dim: int, convex: bool = False,
        radius_bound: float = float("nan"), boundary_refine: float = 1e-10,
    ) -> "Domain":
        return cls(
            contains=fn, kind="predicate", dim=dim,
            boundary_refine=boundary_refine, convex=convex,
            radius_bound=radius_bound,
        )


@dataclass
class ExitRecord:
    exited: bool
    sigma: float           # +inf if censored at the horizon
    exit_state: Optional[tuple]
    horizon: float


def _segment_exit(domain, xa, xb, ta, tb):
    """Earliest boundary crossing on the linear interpolant, by bisection.

    xa at ta is inside, xb at tb outside. Returns (t_cross, x_cross) with
    time tolerance domain.boundary_refine.
    """
    lo, hi = ta, tb
    pa, pb = xa, xb
    while hi - lo > domain.boundary_refine:
        mid = 0.5 * (lo + hi)
        w = (mid - ta) / (tb - ta)
        pm = xa + w * (xb - xa)
        if domain.contains(pm[None, :])[0]:
            lo, pa = mid, pm
        else:
            hi, pb = mid, pm
    return hi, pb


def _interval_has_exit(domain, xa, xb):
    """Endpoint check, plus interior subsamples for non-convex domains."""
    if not domain.contains(xb[None, :])[0]:
        return True
    if domain.convex:
        return False
    for j in range(1, _NONCONVEX_SUBSAMPLES + 1):
        w = j / (_NONCONVEX_SUBSAMPLES + 1)
        if not domain.contains((xa + w * (xb - xa))[None, :])[0]:
            return True
    return False


def exit_time(traj: TrajectoryBatch, domain: Domain, path: int = 0) -> ExitRecord:
    """First exit of the position path from O, refined by bisection.

    The crossing is bracketed on the piecewise-linear position interpolant
    between grid times; for non-convex domains interior points of each
    segment are subsampled as well.
    """
    x = traj.x[path]
    times = traj.times
    horizon = float(times[-1])
    if not domain.contains(x[0][None, :])[0]:
        return ExitRecord(True, 0.0, (x[0].copy(), traj.v[path, 0].copy()), horizon)
    for k in range(len(times) - 1):
        if _interval_has_exit(domain, x[k], x[k + 1]):
            ta, tb = float(times[k]), float(times[k + 1])
            xb = x[k + 1]
            if domain.contains(xb[None, :])[0]:
                # exit strictly inside the segment (non-convex): bracket to
                # the first outside subsample
                for j in range(1, _NONCONVEX_SUBSAMPLES + 1):
                    w = j / (_NONCONVEX_SUBSAMPLES + 1)
                    pm = x[k] + w * (x[k + 1] - x[k])
                    if not domain.contains(pm[None, :])[0]:
                        tb = ta + w * (tb - ta)
                        xb = pm
                        break
            sigma, x_cross = _segment_exit(domain, x[k], xb, ta, tb)
            w = (sigma - times[k]) / (times[k + 1] - times[k])
            v_cross = traj.v[path, k] + w * (traj.v[path, k + 1] - traj.v[path, k])
            return ExitRecord(True, float(sigma), (x_cross, v_cross), horizon)
    return ExitRecord(False, math.inf, None, horizon)


def stream_killed(
    model: Optional[DriftModel],
    spec: Optional[StableNoiseSpec],
    domain: Domain,
    initial,
    t_grid,
    M: int,
    stream: RandomStream,
    step: float = 0.01,
    collect: Optional[Callable] = None,
    truncation_radius: float = TRUNCATION_RADIUS,
):
    """Streaming killed-process kernel shared by the estimators here.

    Simulates M paths from `initial` without storing them, killing on the
    first step whose position segment leaves O. Returns
    (alive_at_t: (M, len(t_grid)) bool, final (x, v, alive) at t_grid[-1]).
    collect(t_index, x, v, alive) is invoked at every t_grid time for
    estimators that need intermediate states.

    Kill resolution is one step: a path is dead at the first grid time at or
    after its crossing segment. t_grid entries must be (near-)multiples of
    step; the grid is refined to include them exactly.
    """
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t_grid < 0):
        raise ValueError("t_grid must be nonnegative")
    horizon = float(t_grid.max())
    base = np.arange(0.0, horizon + step / 2, step)
    times = np.unique(np.concatenate([base, t_grid]))
    obs = np.searchsorted(times, t_grid - 1e-12)

    dim = spec.dim if spec is not None else domain.dim
    x0 = np.broadcast_to(np.asarray(initial[0], dtype=float), (dim,))
    v0 = np.broadcast_to(np.asarray(initial[1], dtype=float), (dim,))

    alive_at = np.zeros((M, len(t_grid)), dtype=bool)
    fx = np.empty((M, dim))
    fv = np.empty((M, dim))

    from .integrator import CHUNK

    for c0 in range(0, M, CHUNK):
        c1 = min(c0 + CHUNK, M)
        n = c1 - c0
        gen = stream.child("killed", c0 // CHUNK).generator()
        cx = np.tile(x0, (n, 1))
        cv = np.tile(v0, (n, 1))
        alive = domain.contains(cx).copy()
        obs_ptr = 0
        while obs_ptr < len(obs) and obs[obs_ptr] == 0:
            alive_at[c0:c1, obs_ptr] = alive
            if collect is not None:
                collect(obs_ptr, cx, cv, alive, slice(c0, c1))
            obs_ptr += 1
        for k in range(len(times) - 1):
            h = float(times[k + 1] - times[k])
            if spec is None:
                dl = None
            else:
                dl = standard_increment(spec, n, gen) * h ** (1.0 / spec.alpha)
            nx, nv, _ = euler_jump_step(model, cx, cv, h, dl, truncation_radius)
            nx = np.where(alive[:, None], nx, cx)
            nv = np.where(alive[:, None], nv, cv)
            ok = domain.contains(nx)
            if not domain.convex:
                seg_ok = ok.copy()
                for j in range(1, _NONCONVEX_SUBSAMPLES + 1):
                    w = j / (_NONCONVEX_SUBSAMPLES + 1)
                    seg_ok &= domain.contains(cx + w * (nx - cx))
                ok = seg_ok
            alive = alive & ok
            cx, cv = nx, nv
            while obs_ptr < len(obs) and obs[obs_ptr] == k + 1:
                alive_at[c0:c1, obs_ptr] = alive
                if collect is not None:
                    collect(obs_ptr, cx, cv, alive, slice(c0, c1))
                obs_ptr += 1
        fx[c0:c1] = cx
        fv[c0:c1] = cv
    return alive_at, (fx, fv, alive_at[:, -1])


@dataclass
class SurvivalCurve:
    t_grid: np.ndarray
    estimate: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    M: int
    initial: tuple
    step: float


def survival_curve(
    model, spec, domain: Domain, initial, t_grid, M: int,
    stream: RandomStream, step: float = 0.01,
) -> SurvivalCurve:
    """Monte Carlo survival probabilities P[t < sigma_D] on shared paths.

    All t_grid entries are evaluated on the same trajectory set, so the
    point estimates are exactly nonincreasing in t. Wilson intervals.
    """
    if M < 100:
        raise ValueError("survival_curve requires M >= 100")
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    alive_at, _ = stream_killed(model, spec, domain, initial, t_grid, M, stream, step)
    hits = alive_at.sum(axis=0)
    lo = np.empty(len(t_grid))
    hi = np.empty(len(t_grid))
    for i, h in enumerate(hits):
        lo[i], hi[i] = wilson_interval(int(h), M)
    return SurvivalCurve(
        t_grid=t_grid, estimate=hits / M, ci_lo=lo, ci_hi=hi,
        M=M, initial=(np.asarray(initial[0], dtype=float), np.asarray(initial[1], dtype=float)),
        step=step,
    )


def killed_expectation(
    f: Callable, model, spec, domain: Domain, initial, t: float, M: int,
    stream: RandomStream, step: float = 0.01, f_bound: Optional[float] = None,
) -> tuple:
    """(estimate, standard error) of E[f(X_t) 1_{t < sigma}].

    f maps (x: (n,d), v: (n,d)) to (n,); dead paths contribute 0. If
    f_bound is given, sampled |f| values are validated against it.
    """
    alive_at, (fx, fv, alive) = stream_killed(
        model, spec, domain, initial, [t], M, stream, step
    )
    vals = np.asarray(f(fx, fv), dtype=float)
    if f_bound is not None and np.any(np.abs(vals[alive]) > f_bound + 1e-12):
        raise ValueError("test function exceeds its declared bound")
    vals = np.where(alive, vals, 0.0)
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(M)) if M > 1 else float("nan")
    return est, se


@dataclass
class EscapeTable:
    """sup over starts of P[A_t and |v_t| > R], with the proof thresholds.

    threshold_small / threshold_large are the noise-sup levels the proof
    requires for escape from the |v| <= sqrt(R) and |v| >= sqrt(R) regimes;
    they are +inf-free only when applicable (g(t) > 0 for the large regime).
    """

    R_grid: np.ndarray
    estimate: np.ndarray        # sup over starts
    ci_hi: np.ndarray           # sup over starts of per-start Wilson upper
    per_start: np.ndarray       # (n_starts, n_R)
    threshold_small: np.ndarray
    threshold_large: np.ndarray
    thresholds_applicable: bool
    C: float
    t: float
    M: int


def velocity_escape(
    model, spec, domain: Domain, starts, t: float, R_grid, M: int,
    stream: RandomStream, step: float = 0.005, C: Optional[float] = None,
) -> EscapeTable:
    """Escape-to-large-velocity table over a finite start set.

    For each start, estimates P[position stays in O up to t and |v_t| > R]
    on shared paths (so each row is exactly nonincreasing in R). The
    companion columns give the minimal running noise sup S_t that the
    Gronwall argument requires for the event, using
    g(t) = 2t - (e^{Ct} - 1)/C and I(t) = (e^{Ct} - 1)/C - t; they need
    g(t) > 0, otherwise they are marked inapplicable (estimation still
    runs). C defaults to max(growth constant, diam O), since the argument
    uses one constant for the drift bound, sup_{x in O} |x|, and the
    displacement |x_t - x| <= diam O.
    """
    R_grid = np.atleast_1d(np.asarray(R_grid, dtype=float))
    starts = list(starts)
    if C is None:
        parts = [model.growth_constant if model is not None else 0.0,
                 2.0 * domain.radius_bound]
        vals = [p for p in parts if p is not None and np.isfinite(p)]
        if not vals:
            raise ValueError("pass C explicitly: no finite default available")
        C = float(max(vals))
    per_start = np.empty((len(starts), len(R_grid)))
    for i, z0 in enumerate(starts):
        _, (fx, fv, alive) = stream_killed(
            model, spec, domain, z0, [t], M, stream.child("escape", i), step
        )
        speed = np.linalg.norm(fv, axis=1)
        per_start[i] = np.array(
            [(alive & (speed > R)).mean() for R in R_grid]
        )
    est = per_start.max(axis=0)
    hi = np.array([
        wilson_interval(int(round(p * M)), M)[1] for p in est
    ])

    g = 2.0 * t - (math.exp(C * t) - 1.0) / C
    big_i = (math.exp(C * t) - 1.0) / C - t
    applicable = g > 0.0
    thr_small = R_grid * math.exp(-C * t) - np.sqrt(R_grid) - C * t
    if applicable:
        thr_large = (np.sqrt(R_grid) * g - C - C * t * t / 2.0 - C * t * big_i) / (big_i + t)
    else:
        thr_large = np.full(len(R_grid), np.nan)
    return EscapeTable(
        R_grid=R_grid, estimate=est, ci_hi=hi, per_start=per_start,
        threshold_small=thr_small, threshold_large=thr_large,
        thresholds_applicable=applicable, C=C, t=t, M=M,
    )


@dataclass
class MarginalHistogram:
    grid: PhaseGrid
    density: np.ndarray       # per-cell density (mass / cell volume)
    mass: np.ndarray          # per-cell probability mass
    escaped_fraction: float   # sample fraction outside the grid rectangle
    lp_norm: float
    p_prime: float
    coverage_ok: bool         # >= 99% of samples inside

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum() + self.escaped_fraction)


def empirical_marginal(
    model, spec, initial, t: float, grid: PhaseGrid, M: int,
    stream: RandomStream, step: float = 0.01, p_prime: float = 2.0,
) -> MarginalHistogram:
    """Histogram density estimate of the (un-killed) law of X_t, d = 1.

    Reports the discrete L^{p'} norm of the density as a monitored
    smoothness proxy. Coverage below 99% sets coverage_ok=False (widen the
    grid).
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if spec is not None and spec.dim != 1:
        raise ValueError("phase-space histograms are d = 1 only")
    free = Domain.predicate(lambda x: np.ones(len(x), dtype=bool), dim=1, convex=True)
    _, (fx, fv, _) = stream_killed(model, spec, free, initial, [t], M, stream, step)
    mass, escaped = grid.histogram(fx[:, 0], fv[:, 0])
    vol = grid.cell_volume
    dens = mass / vol
    lp = float(np.sum(vol * dens**p_prime) ** (1.0 / p_prime))
    return MarginalHistogram(
        grid=grid, density=dens, mass=mass, escaped_fraction=escaped,
        lp_norm=lp, p_prime=p_prime, coverage_ok=escaped <= 0.01,
    )


def export_curve_csv(path: str, columns: dict, manifest_hash: str = "") -> None:
    """Write named columns of equal length as CSV (repr floats, diffable)."""
    keys = list(columns)
    n = len(columns[keys[0]])
    with open(path, "w", newline="") as fh:
        if manifest_hash:
            fh.write(f"# manifest={manifest_hash}\n")
        w = csv.writer(fh)
        w.writerow(keys)
        for i in range(n):
            w.writerow([repr(float(columns[k][i])) for k in keys])
