"""Curve transforms and the conditional-law update."""

import json
import math

import numpy as np
import pytest
from scipy.special import gamma as gamma_fn

from roughhedge.errors import DomainError, ValidationError
from roughhedge.model import (ForwardVarianceCurve, MeanReversionCurve,
                              RoughHestonParams, condition1_floor,
                              conditional_forward_variance, conditional_theta,
                              curve_from_json, curve_to_json,
                              forward_variance_from_theta,
                              theta_from_forward_variance)
from roughhedge.special_fn import GridFn, TimeGrid, ml_cdf

# arbitrary-precision oracle: xi(t) = V0 (1 + int_0^t F) for theta = V0(1+t)
XI_LIN_ORACLE = {0.25: 0.04395649170263083,
                 0.5: 0.05008277746269973,
                 1.0: 0.06451246899629982}


def test_params_validation():
    with pytest.raises(DomainError):
        RoughHestonParams(0.5, 2.0, 0.3, -0.7, 0.04)
    with pytest.raises(DomainError):
        RoughHestonParams(0.6, -1.0, 0.3, -0.7, 0.04)
    with pytest.raises(DomainError):
        RoughHestonParams(0.6, 2.0, 0.3, -1.5, 0.04)
    p = RoughHestonParams(0.6, 2.0, 0.3, 0.2, 0.04)
    with pytest.raises(DomainError):
        p.require_hedgeable()


def test_flat_theta_gives_flat_xi(desk_params, flat_theta):
    xi = forward_variance_from_theta(desk_params, flat_theta)
    assert np.max(np.abs(xi.xi.values - desk_params.v0)) < 1e-15
    assert xi.xi.values[0] == desk_params.v0


def test_zero_theta(desk_params, grid512):
    th = MeanReversionCurve.flat(0.0, grid512)
    xi = forward_variance_from_theta(desk_params, th)
    ref = desk_params.v0 * (1.0 - np.concatenate(
        [[0.0], ml_cdf(desk_params.alpha, desk_params.lam, grid512.nodes[1:])]))
    assert np.max(np.abs(xi.xi.values - ref)) < 1e-14


def test_linear_theta_oracle(desk_params, grid512):
    th = MeanReversionCurve(GridFn(grid512, desk_params.v0 * (1 + grid512.nodes)))
    xi = forward_variance_from_theta(desk_params, th)
    for t, expected in XI_LIN_ORACLE.items():
        got = float(xi(t))
        assert got == pytest.approx(expected, rel=1e-9)


def test_roundtrip_theta_xi_theta(desk_params, grid512):
    th = MeanReversionCurve(GridFn(grid512, desk_params.v0 * (1 + grid512.nodes)))
    xi = forward_variance_from_theta(desk_params, th)
    back = theta_from_forward_variance(desk_params, xi)
    err = np.abs(back.theta.values[1:] - th.theta.values[1:])
    assert err.max() < 5e-5  # dominated by D^alpha at the first nodes
    assert err[5:].max() < 1e-5


def test_xi_linear_closed_form(desk_params, grid512):
    slope = 0.01
    xi = ForwardVarianceCurve(GridFn(grid512, desk_params.v0 + slope * grid512.nodes))
    th = theta_from_forward_variance(desk_params, xi)
    a = desk_params.alpha
    ref = slope * grid512.nodes ** (1 - a) / (gamma_fn(2 - a) * desk_params.lam) \
        + desk_params.v0 + slope * grid512.nodes
    assert np.max(np.abs(th.theta.values[1:] - ref[1:])) < 1e-12


def test_flat_xi_gives_flat_theta(desk_params, grid512):
    xi = ForwardVarianceCurve.flat(desk_params.v0, grid512)
    th = theta_from_forward_variance(desk_params, xi)
    assert np.max(np.abs(th.theta.values - desk_params.v0)) < 1e-13


def test_condition1_violation_detected(desk_params, grid512):
    floor = condition1_floor(desk_params, grid512.nodes[1:])
    vals = np.concatenate([[np.nan], 2.0 * floor])  # below the barrier
    curve = MeanReversionCurve(GridFn(grid512, vals))
    with pytest.raises(ValidationError) as exc:
        curve.validate(desk_params)
    assert len(exc.value.nodes) > 0


def test_conditional_theta_constant_path(desk_params, flat_theta):
    path = GridFn(TimeGrid.uniform(0.5, 64), np.full(65, desk_params.v0))
    out = conditional_theta(desk_params, flat_theta, path, 0.5,
                            TimeGrid.uniform(0.5, 32))
    assert np.max(np.abs(out.theta.values - desk_params.v0)) < 1e-14


def test_conditional_theta_shift_for_zero_increment_path(desk_params, grid512):
    """With V pinned at V0, theta_t0 is exactly the shift theta(t0 + .)."""
    th = MeanReversionCurve(GridFn(grid512, desk_params.v0 * (1 + grid512.nodes ** 2)))
    path = GridFn(TimeGrid.uniform(0.3, 48), np.full(49, desk_params.v0))
    u_grid = TimeGrid.uniform(0.5, 16)
    out = conditional_theta(desk_params, th, path, 0.3, u_grid, validate=False)
    ref = th.values_at(0.3 + u_grid.nodes[1:])
    assert np.max(np.abs(out.theta.values[1:] - ref)) < 1e-13


def test_conditional_theta_linear_path_closed_form(desk_params, flat_theta):
    """Linear path V = V0 (1 + v), t0 = 1: kernel integral in closed form."""
    p = desk_params
    t0 = 1.0
    pg = TimeGrid.uniform(t0, 256)
    path = GridFn(pg, p.v0 * (1.0 + pg.nodes))
    theta_big = MeanReversionCurve.flat(p.v0, TimeGrid.uniform(3.0, 64))
    u_grid = TimeGrid.uniform(1.0, 16)
    out = conditional_theta(p, theta_big, path, t0, u_grid, validate=False)
    u = u_grid.nodes[1:]
    a = p.alpha
    g1 = gamma_fn(1.0 - a)
    kernel_int = -(-(1 + u) ** (-a) / a
                   + ((1 + u) ** (1 - a) - u ** (1 - a)) / (a * (1 - a)))
    ref = p.v0 + (a / (p.lam * g1)) * p.v0 * kernel_int \
        + (u + 1.0) ** (-a) / (p.lam * g1) * (p.v0 - 2.0 * p.v0)
    assert np.max(np.abs(out.theta.values[1:] - ref)) < 1e-13


def test_conditional_forward_variance_flat(desk_params, flat_theta):
    path = GridFn(TimeGrid.uniform(0.5, 64), np.full(65, desk_params.v0))
    grid = TimeGrid.uniform(0.5, 64)
    xi_c = conditional_forward_variance(desk_params, flat_theta, path, 0.5, grid)
    assert np.max(np.abs(xi_c.xi.values - desk_params.v0)) < 1e-13


def test_conditional_fv_starts_at_v_t0(desk_params, flat_theta):
    pg = TimeGrid.uniform(0.5, 64)
    path = GridFn(pg, desk_params.v0 * (1.0 + pg.nodes))
    grid = TimeGrid.uniform(0.5, 32)
    xi_c = conditional_forward_variance(desk_params, flat_theta, path, 0.5,
                                        grid, validate=False)
    assert xi_c.xi.values[0] == pytest.approx(desk_params.v0 * 1.5, abs=1e-14)


def test_conditional_theta_domain_errors(desk_params, flat_theta):
    path = GridFn(TimeGrid.uniform(0.5, 8), np.full(9, desk_params.v0))
    with pytest.raises(DomainError):
        conditional_theta(desk_params, flat_theta, path, 0.0,
                          TimeGrid.uniform(0.5, 8))
    with pytest.raises(DomainError):
        conditional_theta(desk_params, flat_theta, path, 0.7,
                          TimeGrid.uniform(0.5, 8))


def test_nested_mc_conditional_mean(desk_params, flat_theta):
    """Conditional curve vs re-simulation from the conditional model.

    One realised path to t0; the conditional forward-variance curve must
    match the conditional Monte Carlo mean within 3 SE plus the
    path-discretisation margin of the kernel integrals.
    """
    from roughhedge.simulate import simulate_rough_heston
    p = desk_params
    t0, tail = 0.25, 0.5
    sim_grid = TimeGrid.uniform(t0, 128)
    ps = simulate_rough_heston(p, MeanReversionCurve.flat(p.v0, sim_grid),
                               sim_grid, 1, seed=99)
    path = GridFn(sim_grid, ps.v_raw[0])
    grid = TimeGrid.uniform(tail, 64)
    xi_c = conditional_forward_variance(p, flat_theta, path, t0, grid,
                                        validate=False)
    v_t0 = float(ps.v_raw[0, -1])
    theta_c = conditional_theta(p, flat_theta, path, t0, grid, validate=False)
    cond_params = RoughHestonParams(p.alpha, p.lam, p.nu, p.rho,
                                    max(v_t0, 1e-10), p.s0)
    ps2 = simulate_rough_heston(cond_params, theta_c, grid, 20000, seed=7)
    mean = ps2.v_raw.mean(axis=0)
    se = ps2.v_raw.std(axis=0) / np.sqrt(ps2.n_paths)
    gap = np.abs(mean - xi_c.xi.values)[1:]
    assert np.all(gap < 3.0 * se[1:] + 5e-4)


def test_curve_json_roundtrip(grid512):
    vals = np.concatenate([[np.nan], np.linspace(0.01, 0.05, 512)])
    text = curve_to_json("theta", grid512, vals)
    kind, grid, back = curve_from_json(text)
    assert kind == "theta"
    assert np.array_equal(grid.nodes, grid512.nodes)
    assert np.isnan(back[0]) and np.allclose(back[1:], vals[1:])
    doc = json.loads(text)
    assert set(doc) == {"grid", "values", "kind"}
    with pytest.raises(ValidationError):
        curve_from_json(json.dumps({"grid": [0, 1], "values": [1], "kind": "xi"}))
