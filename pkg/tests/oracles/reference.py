"""Independent reference formulas for the noise-level quantities.

Everything here is computed from closed-form antiderivatives of the jump
density c |z|^{-d-alpha}, using scipy's gamma function directly. The package
under test obtains the same quantities by a different route (Newton solve of
the characteristic-exponent identity plus quadrature), so agreement is a real
cross-check rather than the same code evaluated twice.

FROZEN values below were generated once with mpmath at 30 digits and are
pasted as literals; regenerating them is a one-liner kept in each comment.
"""

import numpy as np
from scipy.special import gamma


def density_constant(alpha: float, d: int) -> float:
    """c_{alpha,d} = alpha 2^{alpha-1} Gamma((d+alpha)/2) / (pi^{d/2} Gamma(1-alpha/2))."""
    return (
        alpha
        * 2.0 ** (alpha - 1.0)
        * gamma((d + alpha) / 2.0)
        / (np.pi ** (d / 2.0) * gamma(1.0 - alpha / 2.0))
    )


def sphere_area(d: int) -> float:
    return 2.0 * np.pi ** (d / 2.0) / gamma(d / 2.0)


def big_jump_rate(alpha: float, d: int, delta: float) -> float:
    """nu({|z| > delta}) = c |S^{d-1}| delta^{-alpha} / alpha."""
    return density_constant(alpha, d) * sphere_area(d) * delta ** (-alpha) / alpha


def small_second_moment(alpha: float, d: int, delta: float) -> float:
    """int_{|z|<=delta} |z|^2 nu(dz) = c |S^{d-1}| delta^{2-alpha} / (2-alpha)."""
    return (
        density_constant(alpha, d) * sphere_area(d) * delta ** (2.0 - alpha) / (2.0 - alpha)
    )


def interval_mass(alpha: float, lo: float, hi: float) -> float:
    """nu((lo, hi)) for 0 < lo < hi in d = 1, one side only."""
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    c = density_constant(alpha, 1)
    return c * (lo ** (-alpha) - hi ** (-alpha)) / alpha


def ball_mass_1d(alpha: float, center: float, radius: float, delta: float) -> float:
    """nu(B(center, radius) cap {|z| > delta}) in d = 1, both signs counted."""
    lo, hi = center - radius, center + radius
    total = 0.0
    p, q = max(lo, delta), hi                # intersection with (delta, inf)
    if q > p:
        total += interval_mass(alpha, p, q)
    p, q = max(-hi, delta), -lo              # (-inf, -delta) part, reflected
    if q > p:
        total += interval_mass(alpha, p, q)
    return total


def cf_target(alpha: float, dt: float, xi: float) -> float:
    """E exp(i xi . L_dt) = exp(-dt |xi|^alpha)."""
    return float(np.exp(-dt * abs(xi) ** alpha))


# FROZEN (mpmath, 30 dps): c_{alpha,d} for the alphas exercised in tests.
# regen: alpha*2**(alpha-1)*gamma((d+alpha)/2)/(pi**(d/2)*gamma(1-alpha/2))
FROZEN_C = {
    (1.5, 1): 0.29920671030107451,
    (0.8, 1): 0.28195845299999039,
    (1.2, 1): 0.33354942991224811,
    (1.9, 1): 0.09099248247519457,
    (1.5, 2): 0.17116712969055234,
}

# FROZEN (mpmath): rate and second moment at the default threshold,
# alpha = 1.5, d = 1, delta = 0.1.
FROZEN_LAMBDA_01 = 12.6156626101008
FROZEN_M2_01 = 0.37846987830302401

# FROZEN (mpmath): one-sided interval masses, alpha = 1.5.
FROZEN_NU_1_2 = 0.1289474422572468          # nu((1, 2))
FROZEN_NU_BALL_3 = 0.0038450527634714356    # nu(B(3, 0.1) cap {|z| > 0.05})

# FROZEN (mpmath): characteristic function targets exp(-|xi|^1.5).
FROZEN_CF_15 = {0.5: 0.7021885013265596, 1.0: 0.36787944117144232, 2.0: 0.059105746561956238}
