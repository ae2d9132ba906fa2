"""Quasi-stationary distribution estimators for the killed process.

Three complementary routes: the conditioned law at a fixed time
(renormalized survivor histogram), a Fleming-Viot particle system whose
time-averaged occupation approximates the QSD, and spectral byproducts
(the decay rate lambda from survival curves, the eigenfunction phi from
the survival profile over starting points).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .drift_models import DriftModel
from .grids import PhaseGrid
from .integrator import euler_jump_step
from .killed_process import Domain
from .rng import RandomStream
from .stable_noise import StableNoiseSpec, sample_increment

__all__ = [
    "ParticleEnsemble",
    "FlemingViotResult",
    "ConditionedLaw",
    "LambdaFit",
    "PhiEstimate",
    "fleming_viot",
    "conditioned_law",
    "estimate_lambda",
    "estimate_phi",
    "tv_distance",
    "choose_velocity_box",
    "push_through_killed",
]


def tv_distance(p, q) -> float:
    """Total variation between two mass vectors, each renormalized to 1."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.sum() <= 0 or q.sum() <= 0:
        raise ValueError("empty mass vector")
    return 0.5 * float(np.abs(p / p.sum() - q / q.sum()).sum())


@dataclass
class ParticleEnsemble:
    """State of a Fleming-Viot system: N particles with uniform weights.

    resample_log records (time, killed_index, donor_index) triples; N never
    changes, a killed particle is instantly rebranched onto a survivor.
    """

    x: np.ndarray               # (N, d)
    v: np.ndarray               # (N, d)
    time: float
    resample_log: list = field(default_factory=list)

    @property
    def n_particles(self) -> int:
        return len(self.x)


@dataclass
class FlemingViotResult:
    ensemble: ParticleEnsemble
    grid: PhaseGrid
    histogram: np.ndarray        # time-averaged occupation after burn-in
    truncated_fraction: float    # occupation mass outside the grid box
    burn_in: float
    resample_rate: float         # resamplings per particle per unit time, post burn-in
    n_resampled: int


def fleming_viot(
    model: Optional[DriftModel],
    spec: StableNoiseSpec,
    domain: Domain,
    N: int,
    horizon: float,
    step: float,
    stream: RandomStream,
    grid: Optional[PhaseGrid] = None,
    burn_in_fraction: float = 0.3,
    initial: Optional[tuple] = None,
) -> FlemingViotResult:
    """Run a Fleming-Viot system and time-average its occupation measure.

    All particles advance through the same step barrier; the particles
    killed on a step are rebranched onto a uniformly chosen survivor, the
    choice drawn from the killed particle's own substream so the outcome
    does not depend on the order kills are processed. Simultaneous death
    of every particle aborts (the construction is undefined there).
    """
    if N < 2:
        raise ValueError("need at least 2 particles")
    d = spec.dim
    gen = stream.child("fv", "bulk").generator()
    if initial is not None:
        x = np.tile(np.asarray(initial[0], dtype=float).reshape(1, d), (N, 1))
        v = np.tile(np.asarray(initial[1], dtype=float).reshape(1, d), (N, 1))
    else:
        # spread over the domain interior, velocities at rest
        x = _interior_points(domain, N, gen)
        v = np.zeros((N, d))
    if not bool(domain.contains(x).all()):
        raise ValueError("initial ensemble must start inside O")

    n_steps = int(round(horizon / step))
    burn_steps = int(burn_in_fraction * n_steps)
    if grid is None:
        grid = PhaseGrid.regular(-1.0, 1.0, -8.0, 8.0, 20, 20)
    hist = np.zeros(grid.n_cells)
    outside = 0.0
    samples = 0
    ens = ParticleEnsemble(x=x, v=v, time=0.0)
    n_resampled_post = 0

    for k in range(n_steps):
        dl = sample_increment(spec, step, N, stream.child("fv", "noise", k))
        ens.x, ens.v, _ = euler_jump_step(model, ens.x, ens.v, step, dl)
        ens.time = (k + 1) * step
        dead = ~domain.contains(ens.x)
        if dead.all():
            raise RuntimeError("total simultaneous extinction of the ensemble")
        if dead.any():
            survivors = np.flatnonzero(~dead)
            for i in np.flatnonzero(dead):
                dgen = stream.child("fv", "donor", int(i), k).generator()
                j = int(survivors[dgen.integers(len(survivors))])
                ens.x[i] = ens.x[j]
                ens.v[i] = ens.v[j]
                ens.resample_log.append((ens.time, int(i), j))
                if k >= burn_steps:
                    n_resampled_post += 1
        if k >= burn_steps:
            mass, out = grid.histogram(ens.x[:, 0], ens.v[:, 0])
            hist += mass
            outside += out
            samples += 1

    hist /= samples
    outside /= samples
    if hist.sum() > 0:  # velocity-box leak kept in truncated_fraction only
        hist /= hist.sum()
    post_time = horizon - burn_steps * step
    return FlemingViotResult(
        ensemble=ens, grid=grid, histogram=hist,
        truncated_fraction=float(outside),
        burn_in=burn_steps * step,
        resample_rate=n_resampled_post / (N * post_time),
        n_resampled=len(ens.resample_log),
    )


def _interior_points(domain: Domain, n: int, gen) -> np.ndarray:
    if not np.isfinite(domain.radius_bound):
        raise ValueError("need a bounded domain to scatter initial particles")
    r = domain.radius_bound
    pts = np.empty((n, domain.dim))
    got = 0
    while got < n:
        cand = gen.uniform(-r, r, size=(2 * (n - got) + 16, domain.dim))
        ok = domain.contains(cand)
        take = cand[ok][: n - got]
        pts[got:got + len(take)] = take
        got += len(take)
    return pts


@dataclass
class ConditionedLaw:
    grid: PhaseGrid
    mass: np.ndarray             # cell masses, normalized over survivors in the box
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    survivors: int
    M: int
    survival: float
    truncated_fraction: float    # survivor mass outside the velocity box
    t: float


def conditioned_law(
    model: Optional[DriftModel],
    spec: StableNoiseSpec,
    domain: Domain,
    x0: tuple,
    t: float,
    grid: PhaseGrid,
    M: int,
    stream: RandomStream,
    step: float = 0.01,
    min_survivors: int = 500,
    pilot: int = 2000,
) -> ConditionedLaw:
    """Histogram of Law(X_t | t < sigma) on the grid, with multinomial CIs.

    A pilot run sizes the survivor count first; if M * S_hat(t) < 500 the
    call refuses rather than return a histogram too noisy to use. t = 0
    returns the point mass at x0.
    """
    from .killed_process import stream_killed
    from .stable_noise import wilson_interval

    if t == 0.0:
        mass = np.zeros(grid.n_cells)
        x0p = np.asarray(x0[0], dtype=float).ravel()
        v0p = np.asarray(x0[1], dtype=float).ravel()
        idx = grid.flat_index(x0p[:1], v0p[:1])[0]
        if idx >= 0:
            mass[idx] = 1.0
        return ConditionedLaw(grid, mass, mass.copy(), mass.copy(),
                              survivors=M, M=M, survival=1.0,
                              truncated_fraction=float(idx < 0), t=0.0)

    if pilot and pilot < M:
        alive_at, _ = stream_killed(model, spec, domain, x0, [t], pilot,
                                    stream.child("pilot"), step)
        s_hat = alive_at[:, 0].mean()
        if M * s_hat < min_survivors:
            raise ValueError(
                f"expected survivors M*S={M * s_hat:.0f} < {min_survivors}; "
                "increase M or shorten t"
            )

    alive_at, (fx, fv, alive) = stream_killed(model, spec, domain, x0, [t],
                                              M, stream, step)
    n_surv = int(alive.sum())
    if n_surv < min_survivors:
        raise ValueError(f"only {n_surv} survivors < {min_survivors}")
    mass, outside = grid.histogram(fx[alive][:, 0], fv[alive][:, 0])
    inside = mass.sum()
    counts = np.round(mass * n_surv).astype(int)
    lo = np.empty(grid.n_cells)
    hi = np.empty(grid.n_cells)
    for i in range(grid.n_cells):
        lo[i], hi[i] = wilson_interval(int(counts[i]), n_surv)
    norm = mass / inside if inside > 0 else mass
    return ConditionedLaw(grid, norm, lo, hi, survivors=n_surv, M=M,
                          survival=n_surv / M,
                          truncated_fraction=float(outside), t=t)


def choose_velocity_box(fv: np.ndarray, coverage: float = 0.995) -> float:
    """Symmetric velocity half-width covering `coverage` of the samples."""
    q = float(np.quantile(np.abs(fv), coverage))
    return math.ceil(q * 2.0) / 2.0  # round up to the next half-unit


@dataclass
class LambdaFit:
    lambda_hat: float
    ci_lo: float
    ci_hi: float
    window: tuple                # (t_lo, t_hi) of the fitted window
    r_squared: float             # worst per-curve R^2 on the window
    start_independent: bool
    per_curve_slopes: np.ndarray


def estimate_lambda(curves: Sequence[tuple], min_points: int = 4,
                    r2_threshold: float = 0.99) -> LambdaFit:
    """Common exponential decay rate from survival curves of >= 2 starts.

    Each curve is (t, S_hat) arrays. The fit window is automated: the
    widest time window on which every curve's -log S is linear with
    R^2 >= r2_threshold. The common slope comes from a shared-slope,
    per-curve-intercept least squares fit; the start-independence flag
    checks each curve's own slope against the common one at 2 SE.
    """
    if len(curves) < 2:
        raise ValueError("need survival curves from at least 2 starts")
    prepared = []
    for t, s in curves:
        t = np.asarray(t, dtype=float).ravel()
        s = np.asarray(s, dtype=float).ravel()
        keep = s > 0
        prepared.append((t[keep], -np.log(s[keep])))

    # candidate windows from the first curve's time grid
    t_all = prepared[0][0]
    n = len(t_all)
    best = None
    for i in range(n - min_points + 1):
        for j in range(n - 1, i + min_points - 2, -1):
            t_lo, t_hi = t_all[i], t_all[j]
            if best is not None and (t_hi - t_lo) <= best[0]:
                break
            ok = True
            worst_r2 = 1.0
            for t, y in prepared:
                m = (t >= t_lo - 1e-12) & (t <= t_hi + 1e-12)
                if m.sum() < min_points:
                    ok = False
                    break
                r2 = _linear_r2(t[m], y[m])
                worst_r2 = min(worst_r2, r2)
                if r2 < r2_threshold:
                    ok = False
                    break
            if ok:
                cand = (t_hi - t_lo, i, j, worst_r2)
                if best is None or cand[0] > best[0]:
                    best = cand
    if best is None:
        raise ValueError("no window with R^2 >= threshold on every curve")
    _, i, j, worst_r2 = best
    t_lo, t_hi = t_all[i], t_all[j]

    # shared slope, separate intercepts
    num = 0.0
    den = 0.0
    resid_ss = 0.0
    n_pts = 0
    slopes = []
    for t, y in prepared:
        m = (t >= t_lo - 1e-12) & (t <= t_hi + 1e-12)
        tt, yy = t[m], y[m]
        tc = tt - tt.mean()
        num += float(tc @ (yy - yy.mean()))
        den += float(tc @ tc)
        sl = float(tc @ (yy - yy.mean()) / (tc @ tc))
        slopes.append(sl)
        n_pts += len(tt)
    lam = num / den
    for t, y in prepared:
        m = (t >= t_lo - 1e-12) & (t <= t_hi + 1e-12)
        tt, yy = t[m], y[m]
        a = yy.mean() - lam * tt.mean()
        resid_ss += float(((yy - a - lam * tt) ** 2).sum())
    dof = max(1, n_pts - len(prepared) - 1)
    se = math.sqrt(resid_ss / dof / den)
    slopes = np.array(slopes)
    independent = bool(np.all(np.abs(slopes - lam) <= 2.0 * max(se, 1e-12)
                              + 0.15 * abs(lam)))
    z = 1.959963984540054
    return LambdaFit(lam, lam - z * se, lam + z * se, (float(t_lo), float(t_hi)),
                     worst_r2, independent, slopes)


def _linear_r2(t: np.ndarray, y: np.ndarray) -> float:
    tc = t - t.mean()
    yc = y - y.mean()
    den = float(tc @ tc)
    ss_y = float(yc @ yc)
    if ss_y <= 1e-24:  # flat data fits any line exactly
        return 1.0
    slope = float(tc @ yc) / den
    resid = yc - slope * tc
    return 1.0 - float(resid @ resid) / ss_y


@dataclass
class PhiEstimate:
    grid: PhaseGrid
    phi: np.ndarray              # e^{lambda t} S_x(t), normalized; nan on inadequate cells
    adequate: np.ndarray         # bool mask: enough survivors to trust the cell
    survivors: np.ndarray        # per-cell survivor counts
    t: float
    normalization: float         # mu(phi) after normalization (should be 1)


def estimate_phi(
    model: Optional[DriftModel],
    spec: StableNoiseSpec,
    domain: Domain,
    grid: PhaseGrid,
    t: float,
    M: int,
    lambda_hat: float,
    stream: RandomStream,
    mu: Optional[np.ndarray] = None,
    step: float = 0.01,
    min_survivors: int = 25,
) -> PhiEstimate:
    """Survival-profile estimate of the right eigenfunction phi.

    phi(x) is proportional to e^{lambda t} P_x[t < sigma]; each grid cell
    center seeds M paths. Cells whose survivor count falls below
    min_survivors are flagged inadequate and set to nan rather than zero.
    Normalization makes mu(phi) = 1 against the supplied measure (uniform
    over adequate cells when none is given).
    """
    centers = grid.centers()            # (n_cells, 2)
    n = grid.n_cells
    surv = np.zeros(n, dtype=int)
    inside = domain.contains(centers[:, :1])
    surv_frac = _survival_batch(model, spec, domain, centers, t, M, stream, step,
                                active=inside)
    surv = np.round(surv_frac * M).astype(int)
    adequate = inside & (surv >= min_survivors)
    phi = np.full(n, np.nan)
    phi[adequate] = math.exp(lambda_hat * t) * surv_frac[adequate]
    if mu is None:
        mu_use = np.zeros(n)
        mu_use[adequate] = 1.0 / adequate.sum()
    else:
        mu_use = np.asarray(mu, dtype=float).copy()
        mu_use[~adequate] = 0.0
        if mu_use.sum() <= 0:
            raise ValueError("measure has no mass on adequate cells")
        mu_use /= mu_use.sum()
    scale = float(np.nansum(mu_use * np.where(adequate, phi, 0.0)))
    if scale <= 0:
        raise ValueError("phi estimate vanished on the adequate cells")
    phi /= scale
    norm = float(np.nansum(mu_use * np.where(adequate, phi, 0.0)))
    return PhiEstimate(grid, phi, adequate, surv, t, norm)


def push_through_killed(
    mu: np.ndarray,
    grid: PhaseGrid,
    model: Optional[DriftModel],
    spec: StableNoiseSpec,
    domain: Domain,
    s: float,
    M: int,
    stream: RandomStream,
    step: float = 0.01,
) -> np.ndarray:
    """Evolve a gridded measure through the killed dynamics and renormalize.

    M initial states are drawn cell-proportionally from mu (uniform within
    each cell), advanced for time s with killing, and the surviving states
    are histogrammed back on the grid. A quasi-stationary mu is a fixed
    point of this map up to Monte Carlo noise.
    """
    mu = np.asarray(mu, dtype=float).ravel()
    if mu.sum() <= 0:
        raise ValueError("measure has no mass")
    p = mu / mu.sum()
    gen = stream.child("push", "init").generator()
    counts = gen.multinomial(M, p)
    xs = np.empty((M, 1))
    vs = np.empty((M, 1))
    pos = 0
    for ci in np.flatnonzero(counts):
        c = int(counts[ci])
        px, pv = grid.uniform_points(int(ci), c, gen)
        xs[pos:pos + c] = px
        vs[pos:pos + c] = pv
        pos += c
    alive = domain.contains(xs)
    n_steps = int(round(s / step))
    for k in range(n_steps):
        if not alive.any():
            raise RuntimeError("no survivors while pushing the measure")
        dl = np.zeros_like(xs)
        if spec is not None:
            dl[alive] = sample_increment(spec, step, int(alive.sum()),
                                         stream.child("push", k))
        nx, nv, _ = euler_jump_step(model, xs, vs, step, dl)
        xs = np.where(alive[:, None], nx, xs)
        vs = np.where(alive[:, None], nv, vs)
        alive &= domain.contains(xs)
    mass, _ = grid.histogram(xs[alive][:, 0], vs[alive][:, 0])
    if mass.sum() <= 0:
        raise RuntimeError("pushed measure lost all grid mass")
    return mass / mass.sum()


def _survival_batch(model, spec, domain, centers, t, M, stream, step, active=None):
    """Survival fraction at time t for a batch of start cells, M paths each.

    One vectorized walk over all (cell, replicate) pairs; cells outside O
    report 0.
    """
    n = len(centers)
    if active is None:
        active = np.ones(n, dtype=bool)
    idx = np.flatnonzero(active)
    if len(idx) == 0:
        return np.zeros(n)
    d = 1
    x = np.repeat(centers[idx, 0], M)[:, None]
    v = np.repeat(centers[idx, 1], M)[:, None]
    alive = np.ones(len(x), dtype=bool)
    n_steps = int(round(t / step))
    for k in range(n_steps):
        if not alive.any():
            break
        dl = np.zeros_like(x)
        if spec is not None:
            dl[alive] = sample_increment(spec, step, int(alive.sum()),
                                         stream.child("phi", k))
        nx, nv, _ = euler_jump_step(model, x, v, step, dl)
        x = np.where(alive[:, None], nx, x)
        v = np.where(alive[:, None], nv, v)
        alive &= domain.contains(x)
    frac = alive.reshape(len(idx), M).mean(axis=1)
    out = np.zeros(n)
    out[idx] = frac
    return out
