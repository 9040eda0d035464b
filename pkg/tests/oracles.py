"""Independent reference implementations used only by the tests.

The classical square-root model (alpha = 1) has a closed-form transform;
everything here is written directly from that formula with its own
quadrature, sharing no code with the library's solver or pricing paths.
"""

import numpy as np
from scipy.integrate import quad


def heston_cf(u, t, v0, kappa, theta, sigma, rho, s0=1.0):
    """E[exp(i u ln S_t)] in the classical model ("little trap" branch)."""
    xi = kappa - sigma * rho * 1j * u
    d = np.sqrt(xi ** 2 + sigma ** 2 * (u ** 2 + 1j * u))
    g2 = (xi - d) / (xi + d)
    c_term = kappa * theta / sigma ** 2 * (
        (xi - d) * t - 2.0 * np.log((1 - g2 * np.exp(-d * t)) / (1 - g2)))
    d_term = (xi - d) / sigma ** 2 * (1 - np.exp(-d * t)) / (1 - g2 * np.exp(-d * t))
    return np.exp(c_term + d_term * v0 + 1j * u * np.log(s0))


def heston_call(s0, strike, t, v0, kappa, theta, sigma, rho):
    """Lewis-style single integral around the a = 1/2 strip."""
    k = np.log(strike / s0)

    def f(u):
        val = np.exp(-1j * u * k) * heston_cf(u - 0.5j, t, v0, kappa, theta,
                                              sigma, rho)
        return np.real(val) / (u * u + 0.25)

    integral, _ = quad(f, 0.0, 250.0, limit=500)
    return s0 - np.sqrt(s0 * strike) * integral / np.pi


def heston_riccati_h(c0, c1, c2, t):
    """Closed-form solution of h' = c0 + c1 h + c2 h^2, h(0) = 0."""
    d = np.sqrt(c1 * c1 - 4.0 * c0 * c2 + 0j)
    r_minus = (-c1 - d) / (2.0 * c2)
    r_plus = (-c1 + d) / (2.0 * c2)
    g = r_minus / r_plus
    e = np.exp(-d * np.asarray(t))
    return r_minus * (1.0 - e) / (1.0 - g * e)
