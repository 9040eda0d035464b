"""Model parameters, mean-reversion and forward-variance curves.

The variance process is the solution of a rough square-root equation with
power kernel (t-u)^(alpha-1)/Gamma(alpha) and a time-dependent reversion
level theta(t); its resolvent (Mittag-Leffler) form

    E[V_t] = V0 (1 - F(t)) + int_0^t f(t-s) theta(s) ds

makes the forward variance curve xi(t) = E[V_t] and theta two equivalent
parameterisations of the same object:

    lam * theta(t) + V0 t^-alpha/Gamma(1-alpha) = D^alpha xi(t) + lam xi(t).

Conditioning at time t0 keeps the model in the same class; only the
reversion level moves:

    theta_t0(u) = theta(t0+u)
                + (alpha/(lam*Gamma(1-alpha))) *
                  int_0^t0 (t0-v+u)^(-1-alpha) (V_v - V_t0) dv
                + (u+t0)^-alpha/(lam*Gamma(1-alpha)) * (V0 - V_t0).

Admissibility of theta is a pair of envelope conditions: a lower barrier
-V0 u^-alpha/(lam*Gamma(1-alpha)) and an upper power envelope
K_eps u^(-1/2-eps) near zero (checked nodewise as a surrogate).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sps

from .errors import DomainError, NumericalError, ValidationError
from .special_fn import (GridFn, TimeGrid, frac_derivative, ml_cdf,
                         ml_kernel_convolve)


@dataclass(frozen=True)
class RoughHestonParams:
    """Scalar model parameters (alpha, lam, nu, rho, v0, s0)."""

    alpha: float
    lam: float
    nu: float
    rho: float
    v0: float
    s0: float = 1.0

    def __post_init__(self):
        if not (0.5 < self.alpha <= 1.0):
            raise DomainError(f"alpha must be in (1/2, 1], got {self.alpha}")
        for name in ("lam", "nu", "v0", "s0"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"{name} must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise DomainError(f"rho must be in [-1, 1], got {self.rho}")

    def require_hedgeable(self):
        """Hedging needs rho <= 0 and |rho| < 1."""
        if self.rho > 0.0 or abs(self.rho) >= 1.0:
            raise DomainError(
                f"hedging requires rho <= 0 and |rho| < 1, got {self.rho}")


def condition1_floor(params: RoughHestonParams, u) -> np.ndarray:
    """Lower admissibility barrier -V0 u^-alpha / (lam Gamma(1-alpha))."""
    u = np.asarray(u, dtype=float)
    return -params.v0 * u ** (-params.alpha) * sps.rgamma(1.0 - params.alpha) / params.lam


@dataclass
class MeanReversionCurve:
    """theta on (0, T], piecewise linear, power-extrapolated toward 0.

    The value at the t = 0 node may be non-finite (integrable singularity);
    convolutions then extrapolate the first cell with a capped power fit.
    ``eps``/``k_eps`` configure the near-zero upper envelope surrogate.
    """

    theta: GridFn
    eps: float | None = None
    k_eps: float | None = None

    def values_at(self, u) -> np.ndarray:
        return self.theta(u)

    @property
    def grid(self) -> TimeGrid:
        return self.theta.grid

    def validate(self, params: RoughHestonParams, tol: float = 1e-9):
        """Nodewise admissibility check; raises with the offending nodes."""
        eps = self.eps if self.eps is not None else (params.alpha - 0.5) / 2.0
        k_eps = self.k_eps if self.k_eps is not None else 1e3 * params.v0
        u = self.grid.nodes[1:]
        th = np.asarray(self.theta.values[1:], dtype=float)
        floor = condition1_floor(params, u)
        bad = np.flatnonzero(th < floor - tol * (1.0 + np.abs(floor)))
        if bad.size:
            raise ValidationError(
                "mean-reversion curve below the admissibility barrier",
                nodes=u[bad].tolist())
        near = u <= 1.0
        cap = k_eps * u[near] ** (-0.5 - eps)
        bad2 = np.flatnonzero(th[near] > cap * (1.0 + tol) + tol)
        if bad2.size:
            raise ValidationError(
                "mean-reversion curve exceeds the near-zero power envelope",
                nodes=u[near][bad2].tolist())
        return self

    @staticmethod
    def flat(value: float, grid: TimeGrid) -> "MeanReversionCurve":
        return MeanReversionCurve(GridFn(grid, np.full(grid.nodes.size, float(value))))


@dataclass
class ForwardVarianceCurve:
    """xi(t) = E[V_t] on a grid; xi(0) = V0 and xi >= 0 nodewise."""

    xi: GridFn

    @property
    def grid(self) -> TimeGrid:
        return self.xi.grid

    def __call__(self, t):
        return self.xi(t)

    def validate(self, tol: float = 1e-10):
        v = np.asarray(self.xi.values, dtype=float)
        bad = np.flatnonzero(v < -tol)
        if bad.size:
            raise ValidationError("forward variance curve has negative nodes",
                                  nodes=self.grid.nodes[bad].tolist())
        return self

    @staticmethod
    def flat(value: float, grid: TimeGrid) -> "ForwardVarianceCurve":
        return ForwardVarianceCurve(GridFn(grid, np.full(grid.nodes.size, float(value))))


def forward_variance_from_theta(params: RoughHestonParams,
                                theta: MeanReversionCurve,
                                grid: TimeGrid | None = None) -> ForwardVarianceCurve:
    """xi(t) = V0 (1 - F(t)) + (f * theta)(t), singularity-aware.

    The Mittag-Leffler kernel is integrated exactly against the
    piecewise-linear curve, so xi(0) = V0 holds by construction and flat
    theta == V0 returns a flat curve to machine precision.
    """
    if grid is None or np.array_equal(grid.nodes, theta.grid.nodes):
        work = theta.theta
        out_grid = theta.grid
    else:
        out_grid = grid
        work = GridFn(grid, theta.theta(grid.nodes))
        if not np.isfinite(np.abs(theta.theta.values[0])):
            vals = work.values.copy()
            vals[0] = np.nan
            work = GridFn(grid, vals)
    conv = ml_kernel_convolve(params.alpha, params.lam, work).real
    base = params.v0 * (1.0 - np.concatenate(
        [[0.0], np.atleast_1d(ml_cdf(params.alpha, params.lam, out_grid.nodes[1:]))]))
    vals = base + conv
    if not np.isfinite(vals).all():
        raise NumericalError("forward variance convolution produced non-finite values")
    return ForwardVarianceCurve(GridFn(out_grid, vals))


def theta_from_forward_variance(params: RoughHestonParams,
                                xi: ForwardVarianceCurve,
                                validate: bool = True) -> MeanReversionCurve:
    """Invert the resolvent link: theta = D^alpha(xi - V0)/lam + xi.

    Computing D^alpha on xi - V0 (which vanishes at 0) and folding
    D^alpha V0 = V0 t^-alpha/Gamma(1-alpha) analytically into the formula
    avoids the cancellation of two singular terms.
    """
    dev = GridFn(xi.grid, np.asarray(xi.xi.values, dtype=float) - params.v0)
    dalpha = frac_derivative(dev, params.alpha).values
    theta_vals = dalpha / params.lam + np.asarray(xi.xi.values, dtype=float)
    theta_vals[0] = params.v0 if abs(dev.values[0]) == 0 else np.nan
    curve = MeanReversionCurve(GridFn(xi.grid, theta_vals))
    if validate:
        curve.validate(params)
    return curve


def _power_kernel_moments(alpha: float, w1: np.ndarray, w0: np.ndarray):
    """int w^(-1-alpha) and int (w1 - w) w^(-1-alpha) over [w0, w1]."""
    m0 = (w0 ** -alpha - w1 ** -alpha) / alpha
    if alpha == 1.0:
        m1 = w1 * m0 - np.log(w1 / w0)
    else:
        m1 = w1 * m0 - (w1 ** (1.0 - alpha) - w0 ** (1.0 - alpha)) / (1.0 - alpha)
    return m0, m1


def conditional_theta(params: RoughHestonParams,
                      theta0: MeanReversionCurve,
                      v_path: GridFn,
                      t0: float,
                      u_grid: TimeGrid,
                      validate: bool = True) -> MeanReversionCurve:
    """Reversion level of the model conditioned on the variance path to t0.

    ``v_path`` is the realised variance on [0, t0] (piecewise linear, last
    node at t0).  The nearly singular kernel (t0 - v + u)^(-1-alpha) is
    integrated exactly cell by cell against V - V_t0, which keeps the
    integrand small where the kernel peaks.  The u = 0 node is flagged
    non-finite unless the path ends where it started.
    """
    if t0 <= 0.0:
        raise DomainError("conditional_theta requires t0 > 0")
    pv = v_path.grid.nodes
    if abs(pv[-1] - t0) > 1e-12 * max(t0, 1.0):
        raise DomainError("v_path must end at t0")
    vvals = np.asarray(v_path.values, dtype=float)
    v_t0 = float(vvals[-1])
    alpha, lam = params.alpha, params.lam
    pref = alpha * sps.rgamma(1.0 - alpha) / lam

    u = u_grid.nodes[1:]
    acc = np.zeros(u.size)
    d = vvals - v_t0
    for j in range(pv.size - 1):
        a, b = pv[j], pv[j + 1]
        w1 = t0 - a + u
        w0 = t0 - b + u
        m0, m1 = _power_kernel_moments(alpha, w1, w0)
        slope = (d[j + 1] - d[j]) / (b - a)
        acc += d[j] * m0 + slope * m1
    boundary = (u + t0) ** (-alpha) * sps.rgamma(1.0 - alpha) / lam * (params.v0 - v_t0)
    shifted = np.asarray(theta0.values_at(t0 + u), dtype=float)
    vals = np.empty(u_grid.nodes.size)
    vals[1:] = shifted + pref * acc + boundary
    vals[0] = vals[1] if abs(params.v0 - v_t0) == 0 and abs(d).max() == 0 else np.nan
    if abs(params.v0 - v_t0) == 0 and (abs(d).max() == 0):
        vals[0] = float(theta0.values_at(t0))
    curve = MeanReversionCurve(GridFn(u_grid, vals), eps=theta0.eps,
                               k_eps=theta0.k_eps)
    if validate:
        cond_params = RoughHestonParams(alpha, lam, params.nu, params.rho,
                                        max(v_t0, 1e-300), params.s0)
        curve.validate(cond_params, tol=1e-7)
    return curve


def conditional_forward_variance(params: RoughHestonParams,
                                 theta0: MeanReversionCurve,
                                 v_path: GridFn,
                                 t0: float,
                                 grid: TimeGrid,
                                 validate: bool = True) -> ForwardVarianceCurve:
    """s -> E[V_{t0+s} | path to t0]: the conditional model is again of the
    same class, started at V_t0 with reversion level theta_t0."""
    theta_c = conditional_theta(params, theta0, v_path, t0, grid, validate)
    v_t0 = float(np.asarray(v_path.values, dtype=float)[-1])
    cond_params = RoughHestonParams(params.alpha, params.lam, params.nu,
                                    params.rho, max(v_t0, 1e-300), params.s0)
    return forward_variance_from_theta(cond_params, theta_c, grid)


# ---------------------------------------------------------------------------
# Curve JSON interchange (CLI format)
# ---------------------------------------------------------------------------

def curve_to_json(kind: str, grid: TimeGrid, values: np.ndarray) -> str:
    if kind not in ("theta", "xi"):
        raise DomainError("curve kind must be 'theta' or 'xi'")
    return json.dumps({
        "grid": [float(x) for x in grid.nodes],
        "values": [None if not math.isfinite(v) else float(v) for v in values],
        "kind": kind,
    })


def curve_from_json(text: str):
    """Returns (kind, TimeGrid, values); null values decode to nan."""
    doc = json.loads(text)
    for key in ("grid", "values", "kind"):
        if key not in doc:
            raise ValidationError(f"curve JSON missing field '{key}'")
    if doc["kind"] not in ("theta", "xi"):
        raise ValidationError("curve kind must be 'theta' or 'xi'")
    grid = TimeGrid(np.asarray(doc["grid"], dtype=float))
    vals = np.asarray([np.nan if v is None else float(v) for v in doc["values"]])
    if vals.size != grid.nodes.size:
        raise ValidationError("curve values length mismatch")
    return doc["kind"], grid, vals
