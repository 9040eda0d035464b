"""Moment bounds, exponential moments and characteristic functions.

All transforms share one structure: solve a fractional Riccati equation for
h(z, .), then exponentiate a weighted integral of h against the model's
source term.  Two equivalent source representations are implemented:

* theta form:   log R(z,t) = int_0^t h(z,t-s) (lam theta(s)
                                + V0 s^-alpha/Gamma(1-alpha)) ds,
  where the singular V0-part is folded analytically into a fractional
  integral of h (so no quadrature ever sees s^-alpha);
* forward-variance form:  log R(z,t) = int_0^t chi(z,t-s) xi(s) ds with
  chi = (z^2-z)/2 + z rho nu h + (nu^2/2) h^2.

Moment explosion is reported through flags, not exceptions: probing past
the sufficient bounds is a supported workflow.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special as sps

from .errors import DomainError, NumericalError
from .model import ForwardVarianceCurve, MeanReversionCurve, RoughHestonParams
from .riccati import solve_riccati_adams_many
from .special_fn import TimeGrid, _power_left_value

DEFAULT_STEPS = 512


@dataclass(frozen=True)
class MomentBounds:
    """Sufficient-condition bounds at a fixed horizon."""

    a0: float
    a_minus: float
    a_plus: float
    x_t: float
    delta_t: float


def moment_bound_a0(params: RoughHestonParams, t: float) -> float:
    """a0(t) = (lam + alpha t^-alpha / Gamma(1-alpha))^2 / (2 nu^2)."""
    if t <= 0:
        raise DomainError("moment_bound_a0 requires t > 0")
    x = params.lam + params.alpha * t ** (-params.alpha) * sps.rgamma(1.0 - params.alpha)
    return x * x / (2.0 * params.nu * params.nu)


def price_moment_bounds(params: RoughHestonParams, t: float) -> MomentBounds:
    """Real interval (a_minus, a_plus) on which E[S_t^a] is finite.

    Roots of a^2 nu^2 (1-rho^2) + a (2 X rho nu - nu^2) - X^2 = 0 with
    X = lam + alpha t^-alpha/Gamma(1-alpha); the product of roots is
    negative, so one root is negative and one exceeds 1.
    """
    if t <= 0:
        raise DomainError("price_moment_bounds requires t > 0")
    if abs(params.rho) >= 1.0:
        raise DomainError("price moment bounds need |rho| < 1")
    nu, rho = params.nu, params.rho
    x = params.lam + params.alpha * t ** (-params.alpha) * sps.rgamma(1.0 - params.alpha)
    delta = 4.0 * nu * nu * x * x + nu ** 4 - 4.0 * rho * nu ** 3 * x
    root = np.sqrt(delta)
    denom = 2.0 * nu * nu * (1.0 - rho * rho)
    center = nu * nu - 2.0 * rho * nu * x
    a_minus = (center - root) / denom
    a_plus = (center + root) / denom
    return MomentBounds(moment_bound_a0(params, t), a_minus, a_plus, x, delta)


class MomentResult(NamedTuple):
    value: float
    guaranteed_finite: bool
    blew_up: bool


# ---------------------------------------------------------------------------
# Exponent machinery (shared by all transforms and by the pricing module)
# ---------------------------------------------------------------------------

def _finite_patch(theta: MeanReversionCurve) -> np.ndarray:
    """theta nodal values with a non-finite start replaced by the
    mass-conserving chord value (capped power extrapolation)."""
    vals = np.asarray(theta.theta.values, dtype=float).copy()
    if not np.isfinite(vals[0]):
        t = theta.grid.nodes
        vals[0] = _power_left_value(t[1], t[2], vals[1], vals[2], 0.75)
    return vals


def theta_h_weights(theta: MeanReversionCurve, grid: TimeGrid) -> np.ndarray:
    """Nodal weights w with int_0^T h(T-s) theta(s) ds = sum_k w_k h(t_k).

    Exact for h and theta piecewise linear on the (uniform) grid: each cell
    integral of the product of two linears contributes to the two h nodes
    it touches.
    """
    t = grid.nodes
    if not grid.is_uniform():
        raise DomainError("theta_h_weights needs a uniform grid")
    n = t.size
    th = np.interp(t, theta.grid.nodes, _finite_patch(theta))
    d = np.diff(t)
    w = np.zeros(n)
    # s-cell j couples theta_j, theta_{j+1} with h_{n-j} (left) and h_{n-j-1}
    for j in range(n - 1):
        w[n - 1 - j] += d[j] * (th[j] / 3.0 + th[j + 1] / 6.0)
        w[n - 2 - j] += d[j] * (th[j] / 6.0 + th[j + 1] / 3.0)
    return w


def xi_exponent_weights(xi_vals: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Nodal weights with int_0^T chi(T-s) xi(s) ds = sum_k w_k chi(t_k)."""
    t = grid.nodes
    n = t.size
    d = np.diff(t)
    w = np.zeros(n)
    for j in range(n - 1):
        w[n - 1 - j] += d[j] * (xi_vals[j] / 3.0 + xi_vals[j + 1] / 6.0)
        w[n - 2 - j] += d[j] * (xi_vals[j] / 6.0 + xi_vals[j + 1] / 3.0)
    return w


def frac_tail_weights(grid: TimeGrid, alpha: float):
    """Weights for I^(1-alpha) h evaluated at the horizon, plus the two
    first-cell power-correction constants (bases s^alpha, s^{2 alpha}).

    I^(1-alpha)h(T) = sum_k w_k h_k + h1(z) C1 + h2(z) C2, where h1, h2 are
    the analytic leading coefficients of h (known per z from the Riccati
    coefficients) and C_i replace the first-cell chord of s^{i alpha} with
    its exact fractional integral.
    """
    t = grid.nodes
    n = t.size
    r = 1.0 - alpha
    w = np.zeros(n)
    tk = t[-1]
    if r == 0.0:
        # alpha = 1: I^0 is the identity, evaluate h at the horizon
        w[-1] = 1.0
        return w, 0.0, 0.0
    inv_gamma = sps.rgamma(r)
    for j in range(n - 1):
        a, b = t[j], t[j + 1]
        u1, u0 = tk - a, tk - b
        m0 = (u1 ** r - u0 ** r) / r
        m1 = u1 * m0 - (u1 ** (r + 1.0) - u0 ** (r + 1.0)) / (r + 1.0)
        slope_l = m0 - m1 / (b - a)
        w[j] += inv_gamma * slope_l
        w[j + 1] += inv_gamma * (m1 / (b - a))
    t1 = t[1]
    cs = []
    for i in (1, 2):
        p = i * alpha
        exact = sps.betainc(p + 1.0, r, t1 / tk) * sps.beta(p + 1.0, r) * tk ** (p + r)
        u1, u0 = tk, tk - t1
        m1 = u1 * (u1 ** r - u0 ** r) / r - (u1 ** (r + 1.0) - u0 ** (r + 1.0)) / (r + 1.0)
        chord = t1 ** (p - 1.0) * m1
        cs.append(inv_gamma * (exact - chord))
    return w, cs[0], cs[1]


def h_leading_coeffs(c0s, c1s, alpha: float):
    """Analytic s^alpha and s^{2 alpha} coefficients of the solution h."""
    h1 = np.asarray(c0s, dtype=complex) * sps.rgamma(1.0 + alpha)
    h2 = np.asarray(c0s, dtype=complex) * np.asarray(c1s, dtype=complex) \
        * sps.rgamma(1.0 + 2.0 * alpha)
    return h1, h2


def _kink_corrections(alpha: float, a_coeffs, w_vals: np.ndarray,
                      grid: TimeGrid, m_cells: int = 6,
                      enabled=None) -> np.ndarray:
    """Chord-error corrections for int_0^T f(T-s) w(s) ds quadratures.

    ``a_coeffs`` are the u^alpha, u^{2 alpha}, ... coefficients of f near
    u = 0 (arrays over the z batch).  The piecewise-linear quadrature is
    exact for linear f, so its error on the first ``m_cells`` u-cells is
    sum_i a_i * int (u^{i a} - chord(u^{i a})) * w_lin(T-u) du, elementary
    cell by cell.  Returns one correction per z row; rows where the local
    expansion has already diverged on the corrected cells are masked off.
    """
    t = grid.nodes
    n = t.size
    m = min(m_cells, n - 1)
    total = np.zeros(a_coeffs[0].shape, dtype=complex)
    for i, ai in enumerate(a_coeffs, start=1):
        p = i * alpha
        acc = 0.0
        for j in range(m):
            u0, u1 = t[j], t[j + 1]
            du = u1 - u0
            # w(T-u) linear on the cell: values at u0, u1
            wl = w_vals[n - 1 - j]
            wr = w_vals[n - 2 - j]
            slope_w = (wr - wl) / du
            # exact: int u^p (wl + slope_w (u-u0)) du
            e0 = (u1 ** (p + 1.0) - u0 ** (p + 1.0)) / (p + 1.0)
            e1 = (u1 ** (p + 2.0) - u0 ** (p + 2.0)) / (p + 2.0)
            exact = wl * e0 + slope_w * (e1 - u0 * e0)
            # chord of u^p on the cell
            cl, cr = u0 ** p, u1 ** p
            sc = (cr - cl) / du
            c0i = cl * du + sc * du * du / 2.0
            c1i = cl * du * du / 2.0 + sc * du * du * du / 3.0
            chord = wl * c0i + slope_w * c1i
            acc += exact - chord
        total = total + ai * acc
    if enabled is not None:
        total = np.where(enabled, total, 0.0)
    return total


def price_coeffs(params: RoughHestonParams, zs):
    """Riccati coefficients of the log-price transform for each z."""
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    c0 = 0.5 * (zs * zs - zs)
    c1 = zs * params.rho * params.nu - params.lam
    c2 = np.full(zs.shape, 0.5 * params.nu * params.nu, dtype=complex)
    return c0, c1, c2


_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()
_CACHE_MAX = 512


def solve_price_riccati(params: RoughHestonParams, zs, grid: TimeGrid,
                        substeps: int = 1):
    """h(z, .) for a batch of z on the grid, with (z, grid) caching.

    Returns (h values (nz, n), blew mask).  Cached entries are shared
    between pricing, hedging and the scalar transforms; reads are lock-free
    on hits, inserts exclusive.
    """
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    key = (round(params.alpha, 14), round(params.lam, 14), round(params.nu, 14),
           round(params.rho, 14), float(grid.horizon), grid.n_steps,
           substeps, zs.tobytes())
    hit = _CACHE.get(key)
    if hit is not None:
        return hit
    c0, c1, c2 = price_coeffs(params, zs)
    vals, blew, _ = solve_riccati_adams_many(c0, c1, c2, params.alpha, grid,
                                             substeps=substeps)
    with _CACHE_LOCK:
        if len(_CACHE) >= _CACHE_MAX:
            _CACHE.clear()
        _CACHE[key] = (vals, blew)
    return vals, blew


def chi_from_h_values(h_vals: np.ndarray, zs, params: RoughHestonParams) -> np.ndarray:
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))[:, None]
    return (0.5 * (zs * zs - zs) + zs * params.rho * params.nu * h_vals
            + 0.5 * params.nu ** 2 * h_vals * h_vals)


def _exponent_theta(params: RoughHestonParams, theta0: MeanReversionCurve,
                    h_vals: np.ndarray, c0s, c1s, grid: TimeGrid) -> np.ndarray:
    """lam * int h(t-s) theta(s) ds + V0 * I^(1-alpha) h (t) per row of h."""
    w_theta = theta_h_weights(theta0, grid)
    w_tail, cc1, cc2 = frac_tail_weights(grid, params.alpha)
    h1, h2 = h_leading_coeffs(c0s, c1s, params.alpha)
    ok = _expansion_ok(c1s, grid, params.alpha)
    th_nodes = np.interp(grid.nodes, theta0.grid.nodes, _finite_patch(theta0))
    kink = _kink_corrections(params.alpha, (h1, h2), th_nodes, grid, enabled=ok)
    tail_corr = np.where(ok, h1 * cc1 + h2 * cc2, 0.0)
    return (params.lam * (h_vals @ w_theta + kink)
            + params.v0 * (h_vals @ w_tail + tail_corr))


def _expansion_ok(c1s, grid: TimeGrid, alpha: float, m_cells: int = 6):
    """True where the t^{k alpha} expansion still converges on the
    corrected cells (|c1| (m dt)^alpha comfortably below 1)."""
    span = grid.nodes[min(m_cells, grid.n_steps)]
    return np.abs(np.atleast_1d(np.asarray(c1s))) * span ** alpha <= 0.4


def chi_leading_coeffs(params: RoughHestonParams, zs):
    """u^alpha and u^{2 alpha} coefficients of chi(z, u) near u = 0."""
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    c0, c1, _ = price_coeffs(params, zs)
    h1, h2 = h_leading_coeffs(c0, c1, params.alpha)
    a1 = zs * params.rho * params.nu * h1
    a2 = zs * params.rho * params.nu * h2 + 0.5 * params.nu ** 2 * h1 * h1
    return a1, a2


def xi_chi_exponent(params: RoughHestonParams, zs, chi_vals: np.ndarray,
                    xi_vals: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """int_0^T chi(z, T-s) xi(s) ds per z row, kink-corrected."""
    w = xi_exponent_weights(xi_vals, grid)
    _, c1, _ = price_coeffs(params, zs)
    ok = _expansion_ok(c1, grid, params.alpha)
    kink = _kink_corrections(params.alpha, chi_leading_coeffs(params, zs),
                             xi_vals, grid, enabled=ok)
    return chi_vals @ w + kink


def general_transform(params: RoughHestonParams, theta0: MeanReversionCurve,
                      c0s, c1s, c2s, t: float,
                      n_steps: int = DEFAULT_STEPS, substeps: int = 2):
    """exp(int_0^t h(.,t-s) dSource(s)) for arbitrary Riccati coefficients.

    Returns (values, blew mask).  Rows that blow up report inf.
    """
    grid = TimeGrid.uniform(t, n_steps)
    h_vals, blew, _ = solve_riccati_adams_many(c0s, c1s, c2s, params.alpha,
                                               grid, substeps=substeps)
    c0s = np.atleast_1d(np.asarray(c0s, dtype=complex))
    c1s = np.atleast_1d(np.asarray(c1s, dtype=complex))
    out = np.full(np.broadcast_shapes(c0s.shape, c1s.shape), np.inf + 0j)
    ok = ~blew
    if ok.any():
        expo = _exponent_theta(params, theta0, h_vals[ok], c0s[ok] if c0s.size > 1 else c0s,
                               c1s[ok] if c1s.size > 1 else c1s, grid)
        out[ok] = np.exp(expo)
    return out, blew


def exp_int_variance_moment(params: RoughHestonParams,
                            theta0: MeanReversionCurve,
                            a: float, t: float,
                            n_steps: int = DEFAULT_STEPS) -> MomentResult:
    """E[exp(a int_0^t V_s ds)], finite whenever a < a0(t).

    Above the bound the value is attempted anyway and reported with
    ``guaranteed_finite=False``; a Riccati blow-up then yields +inf.
    """
    if t <= 0:
        raise DomainError("exp_int_variance_moment requires t > 0")
    guaranteed = a < moment_bound_a0(params, t)
    vals, blew = general_transform(params, theta0, a, -params.lam,
                                   0.5 * params.nu ** 2, t, n_steps)
    if blew[0]:
        if guaranteed:
            raise NumericalError(
                "Riccati blow-up below the exponential-moment bound; solver bug")
        return MomentResult(float("inf"), False, True)
    v = vals[0]
    if abs(v.imag) > 1e-9 * max(abs(v.real), 1.0):
        raise NumericalError("real moment came back complex")
    return MomentResult(float(v.real), guaranteed, False)


def price_moment(params: RoughHestonParams, theta0: MeanReversionCurve,
                 a: float, t: float,
                 n_steps: int = DEFAULT_STEPS) -> MomentResult:
    """E[S_t^a] / S0^a scaled back by S0^a; finite inside the bounds."""
    if t <= 0:
        raise DomainError("price_moment requires t > 0")
    mb = price_moment_bounds(params, t)
    guaranteed = (mb.a_minus < a < mb.a_plus) and \
        (params.lam - params.rho * params.nu * a > 0)
    vals, blew = general_transform(
        params, theta0, 0.5 * (a * a - a),
        params.rho * params.nu * a - params.lam, 0.5 * params.nu ** 2, t, n_steps)
    if blew[0]:
        if guaranteed:
            raise NumericalError(
                "Riccati blow-up inside the price-moment bounds; solver bug")
        return MomentResult(float("inf"), False, True)
    v = vals[0]
    return MomentResult(params.s0 ** a * float(v.real), guaranteed, False)


def joint_mgf(params: RoughHestonParams, theta0: MeanReversionCurve,
              z: complex, x: float, t: float,
              n_steps: int = DEFAULT_STEPS) -> complex:
    """E[exp(z int V + i x int sqrt(V) dB)] for Re(z) < a0(t)."""
    if t <= 0:
        raise DomainError("joint_mgf requires t > 0")
    if np.real(z) >= moment_bound_a0(params, t):
        raise DomainError("joint_mgf requires Re(z) < a0(t)")
    vals, blew = general_transform(
        params, theta0, z - 0.5 * x * x, 1j * x * params.nu - params.lam,
        0.5 * params.nu ** 2, t, n_steps)
    if blew[0]:
        raise NumericalError("joint transform blew up below its bound")
    return complex(vals[0])


def _check_cond_z(params: RoughHestonParams, z: complex, t: float):
    a = float(np.real(z))
    mb = price_moment_bounds(params, t)
    if params.lam - params.rho * params.nu * a <= 0:
        raise DomainError("char_fn requires lam - rho*nu*Re(z) > 0")
    if not (mb.a_minus < a < mb.a_plus):
        raise DomainError(
            f"Re(z) = {a} outside the moment window ({mb.a_minus:.4f}, {mb.a_plus:.4f})")


def char_fn(params: RoughHestonParams, theta0: MeanReversionCurve,
            z: complex, t: float, n_steps: int = DEFAULT_STEPS) -> complex:
    """R(z,t) = E[exp(z log(S_t/S0))] in the theta representation."""
    if t <= 0:
        raise DomainError("char_fn requires t > 0")
    _check_cond_z(params, z, t)
    c0, c1, c2 = price_coeffs(params, z)
    vals, blew = general_transform(params, theta0, c0, c1, c2, t, n_steps)
    if blew[0]:
        raise NumericalError("characteristic function blew up inside (condZ)")
    return complex(vals[0])


def char_fn_fv(params: RoughHestonParams, xi: ForwardVarianceCurve,
               z: complex, t: float, n_steps: int = DEFAULT_STEPS) -> complex:
    """R(z,t) = exp(int_0^t chi(z,t-s) xi(s) ds), forward-variance form."""
    if t <= 0:
        raise DomainError("char_fn_fv requires t > 0")
    _check_cond_z(params, z, t)
    grid = TimeGrid.uniform(t, n_steps)
    h_vals, blew = solve_price_riccati(params, np.asarray([z]), grid, substeps=2)
    if blew[0]:
        raise NumericalError("characteristic function blew up inside (condZ)")
    chi = chi_from_h_values(h_vals, z, params)
    xi_vals = np.asarray(xi(grid.nodes), dtype=float)
    expo = xi_chi_exponent(params, np.asarray([z]), chi, xi_vals, grid)
    return complex(np.exp(expo[0]))


def conditional_char(params: RoughHestonParams, s_t: float,
                     xi_t: ForwardVarianceCurve, z: complex,
                     tau: float, n_steps: int = DEFAULT_STEPS) -> complex:
    """P_t(z) = s_t^z exp(int_0^tau chi(z,tau-s) E[V_{s+t}|F_t] ds)."""
    if tau <= 0:
        raise DomainError("conditional_char requires tau > 0")
    if s_t <= 0:
        raise DomainError("conditional_char requires s_t > 0")
    _check_cond_z(params, z, tau)
    grid = TimeGrid.uniform(tau, n_steps)
    h_vals, blew = solve_price_riccati(params, np.asarray([z]), grid, substeps=2)
    if blew[0]:
        raise NumericalError("conditional characteristic function blew up")
    chi = chi_from_h_values(h_vals, z, params)
    xi_vals = np.asarray(xi_t(grid.nodes), dtype=float)
    expo = xi_chi_exponent(params, np.asarray([z]), chi, xi_vals, grid)
    return complex(np.exp(z * np.log(s_t) + expo[0]))
