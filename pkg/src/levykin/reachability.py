"""Jump-cascade reachability: planning and importance-sampled estimation.

The positive-probability mechanism for steering the kinetic process from
x0 to a target phase ball works by a cascade: short windows in which the
driving noise makes exactly one big jump landing in a prescribed velocity
ball, separated by longer coast windows with no big jumps, while the small
component stays quiet. The planner instantiates that construction as data;
cascade_probability prices the driving-noise event analytically; and
reach_probability estimates the actual hitting probability either directly
or by conditioning the big-jump component on the cascade event.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .drift_models import DriftModel
from .integrator import euler_jump_step
from .killed_process import Domain
from .rng import RandomStream
from .stable_noise import (
    StableNoiseSpec,
    levy_ball_mass,
    small_second_moment,
    tail_mass,
)

__all__ = [
    "GeometrySpec",
    "Window",
    "CascadePlan",
    "CascadeBound",
    "ReachEstimate",
    "plan_cascade",
    "cascade_probability",
    "reach_probability",
]


@dataclass(frozen=True)
class GeometrySpec:
    rho: float = 0.05           # jump-window / coast-window time ratio
    beta: Optional[float] = None  # target ball radius; default epsilon / 4
    clearance_samples: int = 200  # points sampled per segment
    waypoint_grid: int = 9        # candidate waypoints per axis (d = 2)
    ode_step: float = 1e-3        # skeleton integration step


@dataclass
class Window:
    kind: str                   # "jump" or "coast"
    t0: float
    t1: float
    target_center: Optional[np.ndarray] = None  # None on the final window
    is_final: bool = False

    @property
    def duration(self) -> float:
        return self.t1 - self.t0


@dataclass
class CascadePlan:
    x0: np.ndarray
    v0: np.ndarray
    xF: np.ndarray
    vF: np.ndarray
    epsilon: float
    beta: float
    delta: float
    rho: float
    t: float
    waypoints: np.ndarray        # (K+1, d) polyline vertices, x0 to xF
    windows: list
    jump_times: np.ndarray       # skeleton jump instants (window midpoints)
    post_jump_velocities: np.ndarray  # (K+1, d); last row is vF
    skeleton_final: tuple        # (x, v) of the noise-free execution
    skeleton_ok: bool
    clearance: float             # verified clearance of the polyline

    @property
    def dim(self) -> int:
        return len(self.x0)

    @property
    def n_segments(self) -> int:
        return len(self.waypoints) - 1

    def to_json(self) -> str:
        return json.dumps(
            {
                "x0": self.x0.tolist(), "v0": self.v0.tolist(),
                "xF": self.xF.tolist(), "vF": self.vF.tolist(),
                "epsilon": self.epsilon, "beta": self.beta,
                "delta": self.delta, "rho": self.rho, "t": self.t,
                "waypoints": self.waypoints.tolist(),
                "windows": [
                    {
                        "kind": w.kind, "t0": w.t0, "t1": w.t1,
                        "target_center": None if w.target_center is None
                        else w.target_center.tolist(),
                        "is_final": w.is_final,
                    }
                    for w in self.windows
                ],
                "jump_times": self.jump_times.tolist(),
                "post_jump_velocities": self.post_jump_velocities.tolist(),
                "skeleton_ok": self.skeleton_ok,
            },
            indent=2,
        )


def _drift_flow(model, x, v, t0, t1, step):
    """Noise-free forward integration with the production step kernel."""
    x = x.reshape(1, -1).copy()
    v = v.reshape(1, -1).copy()
    t = t0
    while t < t1 - 1e-15:
        h = min(step, t1 - t)
        x, v, _ = euler_jump_step(model, x, v, h, None)
        t += h
    return x[0], v[0]


def _segment_clearance_ok(domain: Domain, a, b, clearance: float, samples: int) -> bool:
    """Dense check that the segment [a, b] keeps `clearance` from O^c."""
    w = np.linspace(0.0, 1.0, samples)[:, None]
    pts = a[None, :] + w * (b - a)[None, :]
    if not bool(domain.contains(pts).all()):
        return False
    d = len(a)
    if d == 1:
        offs = clearance * np.array([[-1.0], [1.0]])
    else:
        ang = np.linspace(0.0, 2.0 * math.pi, 8, endpoint=False)
        offs = clearance * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    for o in offs:
        if not bool(domain.contains(pts + o[None, :]).all()):
            return False
    return True


def _find_polyline(domain: Domain, a, b, epsilon: float, geo: GeometrySpec) -> np.ndarray:
    """Shortest clearance-feasible polyline from a to b (BFS on visibility).

    Direct segments are preferred; otherwise candidate waypoints on a grid
    inside O (with 2 epsilon clearance) are connected by clearance-feasible
    segments and the fewest-hop path is returned.
    """
    clear = epsilon / 2.0
    if _segment_clearance_ok(domain, a, b, clear, geo.clearance_samples):
        return np.stack([a, b])
    d = len(a)
    if d != 2:
        raise ValueError("no clearance-feasible direct segment found")
    if not np.isfinite(domain.radius_bound):
        raise ValueError("waypoint search needs a domain with a radius bound")
    r = domain.radius_bound
    ax = np.linspace(-r, r, geo.waypoint_grid)
    gx, gy = np.meshgrid(ax, ax, indexing="ij")
    cand = np.stack([gx.ravel(), gy.ravel()], axis=1)
    keep = []
    for p in cand:
        if _segment_clearance_ok(domain, p, p, 2.0 * epsilon, 2):
            keep.append(p)
    nodes = [a] + keep + [b]
    n = len(nodes)
    adj = [[] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if _segment_clearance_ok(domain, nodes[i], nodes[j], clear,
                                     geo.clearance_samples):
                adj[i].append(j)
                adj[j].append(i)
    # BFS, fewest hops from 0 to n-1
    prev = [-1] * n
    seen = [False] * n
    seen[0] = True
    queue = [0]
    while queue:
        cur = queue.pop(0)
        if cur == n - 1:
            break
        for nxt in adj[cur]:
            if not seen[nxt]:
                seen[nxt] = True
                prev[nxt] = cur
                queue.append(nxt)
    if not seen[n - 1]:
        raise ValueError("no clearance-feasible polyline found")
    path = [n - 1]
    while path[-1] != 0:
        path.append(prev[path[-1]])
    return np.stack([nodes[i] for i in reversed(path)])


def plan_cascade(
    x0,
    xF,
    epsilon: float,
    domain: Domain,
    t: float,
    geometry: Optional[GeometrySpec] = None,
    model: Optional[DriftModel] = None,
    spec_delta_cap: float = 1.0,
) -> CascadePlan:
    """Build a cascade plan steering x0 = (x, v) into B(xF, epsilon).

    Window schedule for a K-segment polyline: jump windows J_0 .. J_K
    alternate with coast windows C_1 .. C_K, starting and ending with a
    jump window (the last one corrects the velocity at the target). All
    coasts share one duration and every jump window is rho times it, which
    realizes the smallness ratios of the cascade regime.

    Post-jump velocities are computed by shooting through the actual drift
    (noise off): the kinematic choice (y_{k+1} - y_k)/Delta is only the
    zeroth iterate, and with a drift present it can miss the waypoint by
    more than epsilon/2, so the skeleton would fail its own landing
    contract. The returned plan stores the drift-corrected targets and the
    verified skeleton landing state.
    """
    geo = geometry or GeometrySpec()
    x0p = np.asarray(x0[0], dtype=float).ravel()
    v0 = np.asarray(x0[1], dtype=float).ravel()
    xFp = np.asarray(xF[0], dtype=float).ravel()
    vF = np.asarray(xF[1], dtype=float).ravel()
    if not bool(domain.contains(x0p[None, :])[0]) or not bool(domain.contains(xFp[None, :])[0]):
        raise ValueError("both endpoints must lie in O")
    beta = geo.beta if geo.beta is not None else epsilon / 4.0
    delta = min(beta / 2.0, spec_delta_cap)

    waypoints = _find_polyline(domain, x0p, xFp, epsilon, geo)
    K = len(waypoints) - 1

    dc = t / (K + (K + 1) * geo.rho)   # coast duration
    dj = geo.rho * dc                  # jump-window duration
    windows: list = []
    bounds = [0.0]
    for k in range(K):
        bounds.append(bounds[-1] + dj)  # J_k
        bounds.append(bounds[-1] + dc)  # C_{k+1}
    bounds.append(t)                    # J_K ends at t
    jump_times = np.array(
        [0.5 * (bounds[2 * k] + bounds[2 * k + 1]) for k in range(K)]
        + [0.5 * (bounds[2 * K] + t)]
    )

    # shooting: sequentially choose post-jump velocity w_k so the drift flow
    # from waypoint k reaches waypoint k+1 at the next jump instant
    dim = len(x0p)
    post_v = np.zeros((K + 1, dim))
    cx, cv = _drift_flow(model, x0p, v0, 0.0, jump_times[0], geo.ode_step)
    for k in range(K):
        t_a, t_b = jump_times[k], jump_times[k + 1]
        target = waypoints[k + 1]
        x_here = cx.copy()

        if k == K - 1:
            def residual(w, t_a=t_a, x_here=x_here):
                xx, vv = _drift_flow(model, x_here, np.asarray(w, dtype=float),
                                     t_a, jump_times[K], geo.ode_step)
                xx, _ = _drift_flow(model, xx, vF, jump_times[K], t, geo.ode_step)
                return xx - xFp
        else:
            def residual(w, t_a=t_a, t_b=t_b, x_here=x_here, target=target):
                xx, _ = _drift_flow(model, x_here, np.asarray(w, dtype=float),
                                    t_a, t_b, geo.ode_step)
                return xx - target

        w_guess = (target - x_here) / (t_b - t_a)
        sol = optimize.root(residual, w_guess, tol=1e-12)
        if not sol.success or np.linalg.norm(residual(sol.x)) > 1e-8:
            raise ValueError(f"shooting failed on segment {k}: {sol.message}")
        post_v[k] = sol.x
        cx, cv = _drift_flow(model, x_here, post_v[k], t_a, t_b, geo.ode_step)
    post_v[K] = vF

    # window records with deterministic ball centers (final one random)
    centers = []
    sx, sv = _drift_flow(model, x0p, v0, 0.0, jump_times[0], geo.ode_step)
    for k in range(K + 1):
        centers.append(post_v[k] - sv)
        sv = post_v[k]
        if k < K:
            sx, sv = _drift_flow(model, sx, sv, jump_times[k], jump_times[k + 1], geo.ode_step)
    sx, sv = _drift_flow(model, sx, sv, jump_times[K], t, geo.ode_step)
    skeleton_final = (sx, sv)
    land_ok = (
        np.linalg.norm(sx - xFp) <= epsilon / 2.0
        and np.linalg.norm(sv - vF) <= epsilon / 2.0
    )

    wlist = []
    for k in range(K):
        wlist.append(Window("jump", bounds[2 * k], bounds[2 * k + 1],
                            target_center=centers[k]))
        wlist.append(Window("coast", bounds[2 * k + 1], bounds[2 * k + 2]))
    wlist.append(Window("jump", bounds[2 * K], t, target_center=None, is_final=True))

    # threshold must not swallow any deterministic target ball
    for k, cgt in enumerate(centers[:-1]):
        if np.linalg.norm(cgt) + beta <= delta:
            raise ValueError(f"threshold swallows target ball {k}")

    return CascadePlan(
        x0=x0p, v0=v0, xF=xFp, vF=vF, epsilon=epsilon, beta=beta,
        delta=delta, rho=geo.rho, t=t, waypoints=waypoints, windows=wlist,
        jump_times=jump_times, post_jump_velocities=post_v,
        skeleton_final=skeleton_final, skeleton_ok=bool(land_ok),
        clearance=epsilon / 2.0,
    )


@dataclass
class CascadeBound:
    """Analytic lower-bound pricing of the driving-noise cascade event.

    log_bound is always finite; bound may underflow to 0 (the Doob pricing
    of the quiet small component is brutally conservative at desk scales).
    delta_used < plan.delta means the Doob factor at plan.delta was vacuous
    and the threshold was tightened until t m2(delta)/beta^2 = 1/2.
    """

    log_bound: float
    bound: float
    delta_used: float
    log_factors: dict


def cascade_probability(plan: CascadePlan, spec: StableNoiseSpec,
                        model: Optional[DriftModel] = None) -> CascadeBound:
    """Product pricing of the cascade event, a lower-bound ingredient.

    Per jump window of length D with target ball B: the probability of
    exactly one arrival with mark in the ball is D e^{-lambda D} nu(B cap
    {|z| > delta}); coast windows contribute e^{-lambda D}; the quiet small
    component is priced by the Doob bound 1 - t m2(delta)/beta^2, with
    delta tightened below plan.delta when that is vacuous. The final
    window's random ball is priced at the worst center compatible with the
    event's deviation envelope.
    """
    beta, t = plan.beta, plan.t
    delta = plan.delta
    m2 = small_second_moment(spec, delta)
    if t * m2 / beta**2 >= 0.5:
        # tighten: t * 2 c S delta^{2-a}/((2-a) d?) -- solve m2(delta*) = beta^2/(2t)
        target = beta**2 / (2.0 * t)
        ratio = target / m2
        delta = delta * ratio ** (1.0 / (2.0 - spec.alpha))
    m2_used = small_second_moment(spec, delta)
    quiet = 1.0 - t * m2_used / beta**2
    lam = tail_mass(spec, delta)

    # deviation envelope for the final random center: each of the K+1 jumps
    # lands within beta of its target and the small component stays within
    # beta, so with L the drift's growth constant the velocity deviation at
    # the final jump is at most dev = (K + 3) beta e^{(1+2L) t}
    L = 0.0 if model is None or model.growth_constant is None else model.growth_constant
    dev = (plan.n_segments + 3) * beta * math.exp((1.0 + 2.0 * L) * t)
    worst_center_norm = float(np.linalg.norm(plan.post_jump_velocities[-1]
                                             - plan.post_jump_velocities[-2])) + dev

    log_factors: dict = {}
    log_total = 0.0
    j = 0
    for w in plan.windows:
        if w.kind == "coast":
            lf = -lam * w.duration
            log_factors[f"coast_{j}"] = lf
        else:
            if w.is_final:
                center = worst_center_norm * _unit(plan.dim)
            else:
                center = w.target_center
            mass = levy_ball_mass(spec, center, beta, delta=delta)
            if mass <= 0.0:
                raise ValueError("threshold swallows target (zero ball mass)")
            lf = math.log(w.duration) - lam * w.duration + math.log(mass)
            log_factors[f"jump_{j}"] = lf
            j += 1
        log_total += lf
    if quiet > 0.0:
        log_factors["quiet_small"] = math.log(quiet)
        log_total += math.log(quiet)
    else:  # numerically vacuous even after tightening (should not happen)
        raise ValueError("small-component bound vacuous after tightening")
    return CascadeBound(
        log_bound=log_total,
        bound=math.exp(log_total) if log_total > -745.0 else 0.0,
        delta_used=delta,
        log_factors=log_factors,
    )


def _unit(dim: int) -> np.ndarray:
    e = np.zeros(dim)
    e[0] = 1.0
    return e


def _sample_ball_restricted_d1(spec, center: float, beta: float, delta: float, gen):
    """One draw from nu restricted to B(center, beta) cap {|z| > delta}, d=1.

    The restriction is at most two intervals on the signed axis; pick one
    proportionally to mass, then invert the r^{-1-alpha} CDF on it.
    """
    a = spec.alpha
    lo, hi = center - beta, center + beta
    segs = []
    for s_lo, s_hi, sign in (
        (max(lo, delta), max(hi, delta), 1.0),
        (max(-hi, delta), max(-lo, delta), -1.0),
    ):
        if s_hi > s_lo:
            mass = s_lo ** (-a) - s_hi ** (-a)
            segs.append((s_lo, s_hi, sign, mass))
    if not segs:
        raise ValueError("restricted ball has zero mass")
    masses = np.array([s[3] for s in segs])
    k = 0 if len(segs) == 1 else int(gen.random() < masses[1] / masses.sum())
    s_lo, s_hi, sign, _ = segs[k]
    u = gen.random()
    r = (s_lo ** (-a) - u * (s_lo ** (-a) - s_hi ** (-a))) ** (-1.0 / a)
    return sign * r


@dataclass
class ReachEstimate:
    estimate: float
    ci_lo: float
    ci_hi: float
    mode: str
    successes: int
    M: int
    zero_success_upper: Optional[float] = None  # set when successes == 0


def reach_probability(
    model: Optional[DriftModel],
    spec: StableNoiseSpec,
    plan: CascadePlan,
    domain: Domain,
    M: int,
    mode: str,
    stream: RandomStream,
    step: float = 0.005,
) -> ReachEstimate:
    """Estimate P[t < sigma_D, X_t in B(xF-phase, epsilon)].

    direct: plain Monte Carlo with exact noise increments. conditioned:
    the big-jump component is forced onto the cascade event (one arrival
    per jump window with mark sampled in the target ball, none elsewhere)
    and each path carries the exact probability of that forcing, with the
    final window's ball centered at vF minus the realized velocity. The
    estimator mean(weight * success) is unbiased for P[success and cascade
    event], a lower bound of the reach probability; zero conditioned
    successes yield a reported upper bound, never a bare zero.

    The target is the joint phase-space ball of radius epsilon.
    """
    if mode not in ("direct", "conditioned"):
        raise ValueError("mode must be 'direct' or 'conditioned'")
    d = plan.dim
    target = np.concatenate([plan.xF, plan.vF])

    if mode == "direct":
        return _reach_direct(model, spec, plan, domain, M, stream, step, target)

    if d != 1:
        raise NotImplementedError("conditioned sampling is implemented for d = 1")
    lam = tail_mass(spec, plan.delta)
    m2 = small_second_moment(spec, plan.delta)

    # constant part of the weight: Poisson no-jump/one-jump factors plus
    # the deterministic interior ball masses
    log_w_const = 0.0
    for w in plan.windows:
        log_w_const += -lam * w.duration
        if w.kind == "jump":
            log_w_const += math.log(w.duration)
            if not w.is_final:
                mass = levy_ball_mass(spec, w.target_center, plan.beta, delta=plan.delta)
                if mass <= 0.0:
                    raise ValueError("threshold swallows target (zero ball mass)")
                log_w_const += math.log(mass)

    gen = stream.child("cond").generator()
    vals = np.empty(M)
    hits = 0
    for i in range(M):
        x = plan.x0.reshape(1, d).copy()
        v = plan.v0.reshape(1, d).copy()
        alive = True
        log_w = log_w_const
        for w in plan.windows:
            if w.kind == "jump":
                tau = gen.uniform(w.t0, w.t1)
                x, v, alive = _coast(model, spec, domain, x, v, w.t0, tau, step, m2, gen, alive)
                if w.is_final:
                    center = float(plan.vF[0] - v[0, 0])
                    mass = levy_ball_mass(spec, np.array([center]), plan.beta, delta=plan.delta)
                    if mass <= 0.0:
                        alive = False
                        log_w = -np.inf
                        break
                    log_w += math.log(mass)
                else:
                    center = float(w.target_center[0])
                jump = _sample_ball_restricted_d1(spec, center, plan.beta, plan.delta, gen)
                v = v + jump
                x, v, alive = _coast(model, spec, domain, x, v, tau, w.t1, step, m2, gen, alive)
            else:
                x, v, alive = _coast(model, spec, domain, x, v, w.t0, w.t1, step, m2, gen, alive)
            if not alive:
                break
        z = np.concatenate([x[0], v[0]])
        ok = alive and np.linalg.norm(z - target) < plan.epsilon
        vals[i] = math.exp(log_w) if ok else 0.0
        hits += int(ok)

    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(M)) if M > 1 else float("nan")
    z95 = 1.959963984540054
    if hits == 0:
        upper = math.exp(log_w_const) * 3.0 / M
        return ReachEstimate(0.0, 0.0, upper, "conditioned", 0, M,
                             zero_success_upper=upper)
    return ReachEstimate(est, max(0.0, est - z95 * se), est + z95 * se,
                         "conditioned", hits, M)


def _coast(model, spec, domain, x, v, t0, t1, step, m2, gen, alive):
    """Small-component-only propagation with killing, one path."""
    if not alive:
        return x, v, alive
    d = x.shape[1]
    t = t0
    while t < t1 - 1e-15 and alive:
        h = min(step, t1 - t)
        dl = math.sqrt(h * m2 / d) * gen.standard_normal((1, d))
        x, v, _ = euler_jump_step(model, x, v, h, dl)
        alive = bool(domain.contains(x)[0])
        t += h
    return x, v, alive


def _reach_direct(model, spec, plan, domain, M, stream, step, target):
    from .killed_process import stream_killed
    from .stable_noise import wilson_interval

    _, (fx, fv, alive) = stream_killed(
        model, spec, domain, (plan.x0, plan.v0), [plan.t], M, stream, step
    )
    z = np.concatenate([fx, fv], axis=1)
    ok = alive & (np.linalg.norm(z - target[None, :], axis=1) < plan.epsilon)
    hits = int(ok.sum())
    lo, hi = wilson_interval(hits, M)
    est = hits / M
    return ReachEstimate(est, lo, hi, "direct", hits, M,
                         zero_success_upper=(3.0 / M if hits == 0 else None))
