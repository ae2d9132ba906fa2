"""Shared quadrature kernels for power-law radial integrals.

Everything here integrates smooth integrands against the radial weight
r**(-1-alpha) on (0, inf). Inner singularities are removed analytically
(curvature term on (0, r_mid]), the middle range uses vectorized composite
Gauss-Legendre panels, and tails are either bounded via a declared growth
envelope or, for the cosine weight, delegated to QUADPACK's Fourier rule.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate

_LEG_CACHE: dict = {}


def _leggauss(order):
    if order not in _LEG_CACHE:
        _LEG_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _LEG_CACHE[order]


def panel_integrate(f, edges, order=12, chunk=250_000):
    """Composite Gauss-Legendre integral of f over consecutive panels.

    f must accept a 1-d array and return same-shape values. Evaluation is
    chunked so arbitrarily many panels stay within memory.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.size < 2:
        return 0.0
    xg, wg = _leggauss(order)
    total = 0.0
    for lo in range(0, edges.size - 1, chunk):
        hi = min(lo + chunk, edges.size - 1)
        a = edges[lo:hi]
        b = edges[lo + 1 : hi + 1]
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        nodes = mid[:, None] + half[:, None] * xg[None, :]
        vals = f(nodes.reshape(-1)).reshape(nodes.shape)
        # fixed reduction order: per-panel dot, then ordered pairwise sum
        total += float(np.sum((vals @ wg) * half))
    return total


def geometric_edges(a, b, ratio=1.5):
    """Panel edges a = e_0 < ... < e_n = b growing geometrically."""
    if b <= a:
        return np.array([a, b])
    n = max(1, int(np.ceil(np.log(b / a) / np.log(ratio))))
    return np.geomspace(a, b, n + 1)


def capped_edges(a, b, width_cap, ratio=1.5):
    """Geometric edges whose panel widths never exceed width_cap.

    Used when the integrand oscillates on a known scale: the cap keeps a
    bounded number of oscillation periods inside each panel.
    """
    if b <= a:
        return np.array([a, b])
    # geometric portion while panel width (ratio-1)*z stays below the cap
    z_switch = min(b, width_cap / (ratio - 1.0))
    parts = []
    if z_switch > a:
        parts.append(geometric_edges(a, z_switch, ratio))
        a = parts[-1][-1]
    if b > a:
        n = int(np.ceil((b - a) / width_cap))
        parts.append(np.linspace(a, b, n + 1))
    if len(parts) == 1:
        return parts[0]
    return np.concatenate([parts[0], parts[1][1:]])


def radial_fractional_integral(
    second_diff,
    alpha,
    z_max,
    r_mid=1e-3,
    width_cap=None,
    order=12,
):
    """Integral of second_diff(r) * r**(-1-alpha) over (0, z_max].

    second_diff must be a vectorized even-order difference with
    second_diff(r) = O(r^2) as r -> 0; the (0, r_mid] piece is replaced by
    its curvature approximation second_diff(r_mid)/r_mid^2 * r^{2}, whose
    radial integral is closed-form. Direct evaluation below r_mid would lose
    the O(r^2) signal to floating-point cancellation.
    """
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    r_mid = min(r_mid, 0.5 * z_max)
    curv = float(second_diff(np.array([r_mid]))[0]) / r_mid**2
    head = curv * r_mid ** (2.0 - alpha) / (2.0 - alpha)
    if width_cap is None:
        edges = geometric_edges(r_mid, z_max)
    else:
        edges = capped_edges(r_mid, z_max, width_cap)
    body = panel_integrate(
        lambda r: second_diff(r) * r ** (-1.0 - alpha), edges, order=order
    )
    return head + body


def one_minus_cos_radial(alpha, eps=1e-4, z_cut=1e3):
    """K(alpha) = integral of (1 - cos s) * s**(-1-alpha) over (0, inf).

    (0, eps] uses the two-term Taylor antiderivative, [eps, z_cut] uses
    half-period-capped panels with the stable 2*sin^2(s/2) form, and the
    tail splits off the exact power part leaving a Fourier integral for
    QUADPACK's cosine rule.
    """
    head = eps ** (2.0 - alpha) / (2.0 * (2.0 - alpha)) - eps ** (4.0 - alpha) / (
        24.0 * (4.0 - alpha)
    )
    edges = capped_edges(eps, z_cut, np.pi / 2.0)
    body = panel_integrate(
        lambda s: 2.0 * np.sin(0.5 * s) ** 2 * s ** (-1.0 - alpha), edges
    )
    power_tail = z_cut ** (-alpha) / alpha
    cos_tail, _ = integrate.quad(
        lambda s: s ** (-1.0 - alpha), z_cut, np.inf, weight="cos", wvar=1.0,
        limit=400,
    )
    return head + body + power_tail - cos_tail


def sphere_cosine_moment(alpha, dim, order=64):
    """Integral of |u . e1|^alpha over the unit sphere S^{dim-1}.

    Reduces the isotropic normalization integral to the 1-d radial one:
    for fixed direction u, substituting s = r|u.e1| in the radial integral
    factors the angular dependence out as this moment. dim = 1 returns 2
    (the two-point sphere).
    """
    if dim == 1:
        return 2.0
    # |S^{dim-2}| * int_0^pi |cos t|^alpha sin^{dim-2} t dt; fold at pi/2 and
    # substitute w = pi/2 - t, leaving sin^alpha(w) cos^{dim-2}(w) whose only
    # trouble is the algebraic w^alpha endpoint, handled by geometric panels
    if dim == 2:
        surf = 2.0
    else:
        from scipy.special import gamma as _gamma

        surf = 2.0 * np.pi ** ((dim - 1) / 2.0) / _gamma((dim - 1) / 2.0)
    eps = 1e-12
    head = eps ** (alpha + 1.0) / (alpha + 1.0)
    body = panel_integrate(
        lambda w: np.sin(w) ** alpha * np.cos(w) ** (dim - 2),
        geometric_edges(eps, 0.5 * np.pi, ratio=1.3),
        order=order // 4 or 8,
    )
    return surf * 2.0 * (head + body)
