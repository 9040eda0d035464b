"""Delta and forward-variance hedge ratios, and replication backtests.

The option price is a deterministic functional C(tau, S, xi) of time to
maturity, spot and the forward variance curve, so its martingale dynamics
are spanned by two tradables:

    dC = (dC/dS) dS + (dC/dxi) . (d xi-curve),

where the curve innovation is rank one: d xi_u(s) = (1/lam) f(s) nu
sqrt(V_u) dB_u.  The delta is the Fourier integral with multiplier z/S and
the curve gradient is the kernel k(s) pairing the same transform values
with chi(z, tau - s).

``replicate`` runs the discrete self-financing strategy on simulated paths.
Because chi(z, tau_i - (t_j - t_i)) = chi(z, T - t_j) depends only on the
absolute node, the per-date exponents admit rank-one updates: the whole
backtest costs O(paths * b_nodes * steps) plus one Riccati batch.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .charfn import chi_from_h_values, solve_price_riccati, xi_chi_exponent
from .errors import DomainError
from .model import (ForwardVarianceCurve, MeanReversionCurve,
                    RoughHestonParams, forward_variance_from_theta)
from .pricing import (LOG_MONEYNESS_CAP, FourierContext, QuadratureConfig,
                      VanillaSpec, build_context, payoff_transform)
from .simulate import kernel_cell_means
from .special_fn import GridFn, TimeGrid, ml_density

_BATCH = 4096


@dataclass
class HedgeRatios:
    delta: float
    fv_kernel: GridFn


def delta(params: RoughHestonParams, xi: ForwardVarianceCurve,
          spec: VanillaSpec, q: QuadratureConfig | None = None,
          spot: float | None = None,
          ctx: FourierContext | None = None) -> float:
    """dC/dS as a Fourier integral with multiplier z/S.

    For calls the value lies in [0, 1]; puts by parity minus one.
    """
    params.require_hedgeable()
    if ctx is None:
        ctx = build_context(params, xi, spec.maturity, q)
    s = params.s0 if spot is None else float(spot)
    if ctx.b_nodes.size == 0 or abs(np.log(s / spec.strike)) >= LOG_MONEYNESS_CAP:
        d = 1.0 if s > spec.strike else 0.0
        return d if spec.kind == "call" else d - 1.0
    ghat = np.conj(payoff_transform(ctx.damping, spec.strike, ctx.b_nodes))
    if ctx.degenerate:
        bracket = (np.exp(ctx.zs * np.log(s) + ctx.exponent)
                   - np.exp(ctx.zs * np.log(s))) * ctx.zs / s
        d = (1.0 if s > spec.strike else 0.0) \
            + float(np.sum(ctx.b_weights * ghat * bracket).real) / np.pi
    else:
        integrand = ghat * np.exp(ctx.zs * np.log(s) + ctx.exponent) * ctx.zs / s
        d = float(np.sum(ctx.b_weights * integrand).real) / np.pi
    d = min(max(d, 0.0), 1.0)
    return d if spec.kind == "call" else d - 1.0


def fv_gradient(params: RoughHestonParams, xi: ForwardVarianceCurve,
                spec: VanillaSpec, q: QuadratureConfig | None = None,
                spot: float | None = None,
                ctx: FourierContext | None = None) -> GridFn:
    """Kernel k on [0, T] with dC/dxi . zeta = int k(s) zeta(s) ds.

    k(s_j) pairs the transform values with chi(z, T - s_j); calls and puts
    share it (the parity terms do not depend on the curve).
    """
    params.require_hedgeable()
    if ctx is None:
        ctx = build_context(params, xi, spec.maturity, q)
    s = params.s0 if spot is None else float(spot)
    grid = ctx.grid
    if ctx.b_nodes.size == 0 or abs(np.log(s / spec.strike)) >= LOG_MONEYNESS_CAP:
        return GridFn(grid, np.zeros(grid.nodes.size))
    ghat = np.conj(payoff_transform(ctx.damping, spec.strike, ctx.b_nodes))
    lvals = np.exp(ctx.zs * np.log(s) + ctx.exponent)
    carrier = ctx.b_weights * ghat * lvals
    kern = (carrier[None, :] @ ctx.chi[:, ::-1]).real.ravel() / np.pi
    return GridFn(grid, kern)


def fv_directional(params: RoughHestonParams, xi: ForwardVarianceCurve,
                   spec: VanillaSpec, zeta: GridFn,
                   q: QuadratureConfig | None = None,
                   spot: float | None = None,
                   ctx: FourierContext | None = None) -> float:
    """dC/dxi applied to a bump shape zeta (piecewise-linear pairing)."""
    kern = fv_gradient(params, xi, spec, q, spot, ctx)
    grid = kern.grid
    zv = np.asarray(zeta(grid.nodes), dtype=float)
    if not np.isfinite(zv[0]):
        zv = zv.copy()
        zv[0] = zv[1]
    kv = kern.values
    d = np.diff(grid.nodes)
    cell = d * ((kv[:-1] * zv[:-1] + kv[1:] * zv[1:]) / 3.0
                + (kv[:-1] * zv[1:] + kv[1:] * zv[:-1]) / 6.0)
    return float(np.sum(cell))


def curve_innovation(params: RoughHestonParams, v_u: float, db: float,
                     grid: TimeGrid) -> GridFn:
    """s -> (1/lam) f(s) nu sqrt(v_u) db, the rank-one curve increment.

    The s = 0 node carries the kernel singularity and is flagged NaN
    whenever the increment is nonzero.
    """
    if v_u < 0:
        raise DomainError("curve_innovation requires v_u >= 0")
    scale = params.nu * np.sqrt(v_u) * db / params.lam
    vals = np.zeros(grid.nodes.size)
    if scale != 0.0:
        vals[1:] = scale * ml_density(params.alpha, params.lam, grid.nodes[1:])
        vals[0] = np.nan
    return GridFn(grid, vals)


@dataclass
class HedgeReport:
    """Cross-path means per hedge date plus terminal replication stats."""

    times: TimeGrid
    portfolio_value: np.ndarray
    option_value: np.ndarray
    spot_mean: np.ndarray
    variance_mean: np.ndarray
    delta_mean: np.ndarray
    pnl_terminal: float
    pnl_std_across_paths: float
    pnl_paths: np.ndarray
    premium: float
    n_paths: int
    n_failures: int = 0

    def summary(self) -> dict:
        se = self.pnl_std_across_paths / np.sqrt(max(self.n_paths, 1))
        return {
            "n_paths": int(self.n_paths),
            "n_steps": int(self.times.n_steps),
            "premium": float(self.premium),
            "pnl_mean": float(self.pnl_terminal),
            "pnl_std": float(self.pnl_std_across_paths),
            "pnl_se": float(se),
            "pnl_std_over_premium": float(self.pnl_std_across_paths
                                          / max(self.premium, 1e-300)),
            "n_failures": int(self.n_failures),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,time,S,V,delta,option_value,portfolio_value\n")
        for k, t in enumerate(self.times.nodes):
            buf.write(
                f"{k},{t:.10g},{self.spot_mean[k]:.10g},{self.variance_mean[k]:.10g},"
                f"{self.delta_mean[k]:.10g},{self.option_value[k]:.10g},"
                f"{self.portfolio_value[k]:.10g}\n")
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def replicate(params: RoughHestonParams, theta0: MeanReversionCurve,
              spec: VanillaSpec, q: QuadratureConfig | None = None,
              n_steps: int = 256, n_paths: int = 1000, seed: int = 0) -> HedgeReport:
    """Self-financing replication backtest on simulated paths.

    Hedge dates coincide with simulation dates.  Each path carries its own
    conditional forward-variance state Xi_i[j] = E[V_{t_j} | F_{t_i}],
    evolved by the model-consistent rank-one innovation; the same
    innovation drives the curve-leg accrual, realising the idealised
    "trade the whole curve" strategy of the hedging identity.
    """
    params.require_hedgeable()
    if spec.kind != "call":
        raise DomainError("replication backtest covers calls")
    T = spec.maturity
    K = spec.strike
    grid = TimeGrid.uniform(T, n_steps)
    dt = float(grid.deltas[0])
    q = q or QuadratureConfig(n_nodes=16, n_steps=n_steps)
    if q.n_steps != n_steps:
        q = QuadratureConfig(q.damping, q.b_max, q.n_nodes, n_steps, q.rule)

    xi0 = forward_variance_from_theta(params, theta0, grid)
    linear_payoff = abs(np.log(params.s0 / K)) >= LOG_MONEYNESS_CAP
    ctx = build_context(params, xi0, T, q)
    nb = ctx.b_nodes.size
    zs, chi = ctx.zs, ctx.chi          # chi: (nb, n+1), chi[:, k] = chi(z, t_k)
    ghat_w = np.conj(payoff_transform(ctx.damping, K, ctx.b_nodes)) * ctx.b_weights
    if linear_payoff:
        # payoff indistinguishable from linear: delta 1 (or 0), no curve leg
        ghat_w = np.zeros_like(ghat_w)

    n = n_steps
    w_kernel = kernel_cell_means(params, n, dt)          # cell means of f
    vol_scale = params.nu / params.lam
    # psi[b, k] = sum_m chi[b, k-m] w_m dt : exact-mass convolution used by
    # both the exponent innovation and the curve-leg accrual
    psi = np.empty((nb, n + 1), dtype=complex)
    psi[:, 0] = 0.0
    fw = w_kernel * dt
    for k in range(1, n + 1):
        mm = np.arange(1, k + 1)
        psi[:, k] = chi[:, k - mm] @ fw[:k]

    chi_rev = chi[:, ::-1]             # chi_rev[:, j] = chi(z, T - t_j)
    rho_c = np.sqrt(1.0 - params.rho ** 2)

    root = np.random.SeedSequence(seed)
    n_batches = (n_paths + _BATCH - 1) // _BATCH
    children = root.spawn(n_batches)

    pnl_all = np.empty(n_paths)
    port_sum = np.zeros(n + 1)
    opt_sum = np.zeros(n + 1)
    spot_sum = np.zeros(n + 1)
    var_sum = np.zeros(n + 1)
    delta_sum = np.zeros(n + 1)

    for bi in range(n_batches):
        lo, hi = bi * _BATCH, min((bi + 1) * _BATCH, n_paths)
        m = hi - lo
        rng = np.random.default_rng(children[bi])
        db = rng.standard_normal((m, n)) * np.sqrt(dt)
        dbp = rng.standard_normal((m, n)) * np.sqrt(dt)

        xi_state = np.tile(xi0.xi.values, (m, 1))        # E[V_{t_j} | F_{t_i}]
        s_cur = np.full(m, params.s0)
        expo = np.tile(ctx.exponent, (m, 1))             # int chi xi per path
        port = np.full(m, np.nan)
        opt0 = None

        for i in range(n + 1):
            lvals = np.exp(np.log(s_cur)[:, None] * zs[None, :] + expo)
            if linear_payoff:
                itm = params.s0 > K
                opt = (s_cur - K) if itm else np.zeros_like(s_cur)
                dlt = np.full_like(s_cur, 1.0 if itm else 0.0)
            else:
                opt = (lvals @ ghat_w).real / np.pi
                dlt = (lvals * zs[None, :] / s_cur[:, None] @ ghat_w).real / np.pi
                dlt = np.clip(dlt, 0.0, 1.0)
            v_cur = np.maximum(xi_state[:, i], 0.0)
            if i == 0:
                opt0 = opt.copy()
                port = opt.copy()
            port_sum[i] += port.sum()
            opt_sum[i] += opt.sum()
            spot_sum[i] += s_cur.sum()
            var_sum[i] += v_cur.sum()
            delta_sum[i] += dlt.sum()
            if i == n:
                break

            shock = np.sqrt(v_cur) * db[:, i]
            u = vol_scale * shock                        # curve innovation scale
            # curve-leg accrual: u * (1/pi) Re sum ghat w L psi[:, n-i]
            vol_gain = u * (lvals @ (ghat_w * psi[:, n - i])).real / np.pi
            # evolve the conditional curve and its chi-exponent
            xi_state[:, i + 1:] += np.outer(u, w_kernel[: n - i])
            expo += np.outer(u, psi[:, n - i])
            # trapezoid edge bookkeeping for the moving lower limit
            expo -= 0.5 * dt * np.outer(xi_state[:, i], chi_rev[:, i])
            expo -= 0.5 * dt * np.outer(xi_state[:, i + 1], chi_rev[:, i + 1])
            # spot move and accruals
            dw = params.rho * db[:, i] + rho_c * dbp[:, i]
            s_new = s_cur * np.exp(-0.5 * v_cur * dt + np.sqrt(v_cur) * dw)
            port = port + dlt * (s_new - s_cur) + vol_gain
            s_cur = s_new
            if (i + 1) % 64 == 0:
                # periodic exact rebuild of the exponent kills fma drift
                expo = _exact_exponent(params, zs, chi, xi_state, grid, i + 1)

        pnl_all[lo:hi] = port - np.maximum(s_cur - K, 0.0)

    pnl_mean = float(pnl_all.mean())
    pnl_std = float(pnl_all.std(ddof=1)) if n_paths > 1 else 0.0
    inv = 1.0 / n_paths
    return HedgeReport(grid, port_sum * inv, opt_sum * inv, spot_sum * inv,
                       var_sum * inv, delta_sum * inv, pnl_mean, pnl_std,
                       pnl_all, float(opt_sum[0] * inv), n_paths)


def _exact_exponent(params, zs, chi, xi_state, grid: TimeGrid, i: int):
    """Recompute int_{t_i}^{T} chi(z, T-s) xi(s) ds from scratch (trapezoid
    weights on the remaining nodes)."""
    n = grid.n_steps
    dt = float(grid.deltas[0])
    w = np.full(n + 1 - i, dt)
    w[0] = w[-1] = 0.5 * dt
    # chi(z, T - t_j) for j = i..n
    chi_rev = chi[:, ::-1][:, i:]
    return xi_state[:, i:] @ (chi_rev * w[None, :]).T
