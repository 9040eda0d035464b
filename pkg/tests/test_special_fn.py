"""Mittag-Leffler family and fractional operators.

Frozen [DERIVED] constants were produced by an arbitrary-precision
partial-sum oracle with precision scaled to the cancellation depth
(tools/ml_oracle.py); the shipped code never uses arbitrary precision.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special as sps
from scipy.integrate import quad

from roughhedge.errors import DomainError
from roughhedge.special_fn import (GridFn, MittagLefflerParams, TimeGrid,
                                   frac_derivative, frac_integral,
                                   mittag_leffler, ml_cdf, ml_cdf_integral,
                                   ml_density, ml_kernel_convolve)

# arbitrary-precision oracle values (see module docstring)
E_06_06_AT_M1 = 0.17110228338391675
E_06_06_AT_M5 = 0.011732767406084412
E_06_10_AT_M9 = 0.051918367383206696
E_075_10_AT_M30 = 0.009516692693117128


def test_exp_special_case():
    p = MittagLefflerParams(1.0, 1.0)
    for x in np.linspace(-30.0, 30.0, 41):
        assert mittag_leffler(p, x).real == pytest.approx(math.exp(x), rel=1e-12)


def test_series_anchor_at_zero():
    p = MittagLefflerParams(0.6, 0.6)
    assert mittag_leffler(p, 0.0).real == pytest.approx(1.0 / math.gamma(0.6), rel=1e-14)


@pytest.mark.parametrize("alpha,beta,z,expected", [
    (0.6, 0.6, -1.0, E_06_06_AT_M1),
    (0.6, 0.6, -5.0, E_06_06_AT_M5),
    (0.6, 1.0, -9.0, E_06_10_AT_M9),
    (0.75, 1.0, -30.0, E_075_10_AT_M30),
])
def test_frozen_negative_axis_values(alpha, beta, z, expected):
    got = mittag_leffler(MittagLefflerParams(alpha, beta), z)
    assert got.real == pytest.approx(expected, rel=1e-12)
    assert got.imag == 0.0


def test_region_continuity():
    """Series and cut integral agree where the dispatch switches (|z| = 2),
    evaluated at the same point through both internal routes."""
    from roughhedge.special_fn import _cut_integral, _series
    for alpha, beta in [(0.6, 1.0), (0.8, 0.8)]:
        z = np.array([-2.0 + 0j])
        s_val, s_ok = _series(alpha, beta, z)
        c_val = _cut_integral(alpha, beta, z)
        assert s_ok[0]
        assert abs(s_val[0] - c_val[0]) < 1e-11 * abs(c_val[0])


def test_cut_vs_asymptotic_cross_check():
    """The classical algebraic expansion agrees with the cut integral deep
    on the negative axis, to its own remainder envelope ~ exp(-c |z|^a).

    The envelope (not the smallest term) limits the expansion; this is why
    the dispatch uses the cut integral everywhere in the western sector.
    """
    from roughhedge.special_fn import _asymptotic, _cut_integral
    for alpha, beta, x in [(0.6, 0.6, -40.0), (0.55, 1.0, -45.0)]:
        a_val, _ = _asymptotic(alpha, beta, np.array([x + 0j]))
        c_val = _cut_integral(alpha, beta, np.array([x + 0j]))
        envelope = np.exp(-abs(x) ** alpha)
        assert abs(a_val[0] - c_val[0]) < 10.0 * envelope * abs(c_val[0])
        assert abs(a_val[0] - c_val[0]) > 0.0  # routes are genuinely distinct


def test_conjugate_symmetry():
    p = MittagLefflerParams(0.7, 0.7)
    for z in [0.5 + 1.2j, -4.0 + 2.0j, -15.0 - 3.0j]:
        a = mittag_leffler(p, z)
        b = mittag_leffler(p, np.conj(z))
        assert b == pytest.approx(np.conj(a), rel=1e-11)


def test_domain_errors():
    with pytest.raises(DomainError):
        MittagLefflerParams(1.2, 1.0)
    with pytest.raises(DomainError):
        MittagLefflerParams(0.6, 0.0)
    with pytest.raises(DomainError):
        mittag_leffler(MittagLefflerParams(0.6, 1.0), complex("nan"))
    with pytest.raises(DomainError):
        ml_density(0.6, 2.0, 0.0)
    with pytest.raises(DomainError):
        ml_cdf(0.6, 2.0, -1.0)


def test_density_exponential_limit():
    # alpha = 1 collapses to an exponential density
    assert ml_density(1.0, 2.0, 0.5) == pytest.approx(2.0 * math.exp(-1.0), rel=1e-13)
    assert ml_cdf(1.0, 2.0, 1.0) == pytest.approx(1.0 - math.exp(-2.0), rel=1e-13)


def test_density_asymptotics():
    alpha, lam = 0.6, 2.0
    t_small = np.array([1e-8, 1e-9])
    ratio0 = ml_density(alpha, lam, t_small) / (
        lam / math.gamma(alpha) * t_small ** (alpha - 1.0))
    assert np.allclose(ratio0, 1.0, atol=5e-5)
    t_big = np.array([2e4, 1e5])
    tail = alpha / (lam * math.gamma(1.0 - alpha)) * t_big ** (-(alpha + 1.0))
    assert np.allclose(ml_density(alpha, lam, t_big) / tail, 1.0, atol=2e-3)


def test_density_integrates_to_one():
    """Singularity-aware quadrature of f on (0, T] plus the analytic tail."""
    alpha, lam = 0.6, 2.0
    t_max = 50.0
    body, _ = quad(lambda t: ml_density(alpha, lam, t), 0.0, t_max,
                   points=[1e-6, 1e-3, 0.1, 1.0], limit=400)
    total = body + (1.0 - ml_cdf(alpha, lam, t_max))
    assert total == pytest.approx(1.0, abs=1e-8)


def test_cdf_from_density_quadrature():
    """F(1) against direct quadrature of the density (independent route)."""
    alpha, lam = 0.6, 2.0
    val, _ = quad(lambda t: ml_density(alpha, lam, t), 0.0, 1.0,
                  points=[1e-8, 1e-4, 0.1], limit=300)
    assert ml_cdf(alpha, lam, 1.0) == pytest.approx(val, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.55, 1.0), lam=st.floats(0.2, 5.0))
def test_cdf_monotone_bounded(alpha, lam):
    t = np.linspace(0.0, 8.0, 60)
    f = ml_cdf(alpha, lam, t)
    assert f[0] == 0.0
    assert np.all(np.diff(f) >= -1e-13)
    assert np.all(f <= 1.0 + 1e-13)


def test_cdf_integral_consistency():
    alpha, lam = 0.7, 1.5
    val, _ = quad(lambda s: ml_cdf(alpha, lam, s), 0.0, 2.0, limit=200)
    assert ml_cdf_integral(alpha, lam, 2.0) == pytest.approx(val, rel=1e-10)


# ---------------------------------------------------------------------------
# fractional operators
# ---------------------------------------------------------------------------

def test_frac_integral_constant_and_power():
    grid = TimeGrid.uniform(2.0, 200)
    r = 0.6
    c = 3.5
    out = frac_integral(GridFn(grid, np.full(201, c)), r)
    ref = c * grid.nodes ** r / math.gamma(r + 1.0)
    assert np.max(np.abs(out.values - ref)) < 1e-12
    # linear functions are reproduced exactly by product integration
    out_lin = frac_integral(GridFn(grid, grid.nodes), r)
    ref_lin = math.gamma(2.0) / math.gamma(2.0 + r) * grid.nodes ** (1.0 + r)
    assert np.max(np.abs(out_lin.values - ref_lin)) < 1e-12


def test_frac_integral_power_p2():
    # t^2 is quadratic: second-order scheme error only
    grid = TimeGrid.uniform(1.0, 400)
    r = 0.4
    out = frac_integral(GridFn(grid, grid.nodes ** 2), r)
    ref = math.gamma(3.0) / math.gamma(3.0 + r) * grid.nodes ** (2.0 + r)
    assert np.max(np.abs(out.values - ref)) < 5e-6


def test_frac_integral_ml_identity():
    """I^(1-alpha) f = lam (1 - F) within scheme tolerance on a graded grid.

    f carries a t^(alpha-1) singularity, so the tolerance reflects the
    piecewise-linear representation error away from the origin.
    """
    alpha, lam = 0.6, 2.0
    grid = TimeGrid.graded(1.0, 800, 3.0)
    vals = np.empty(grid.nodes.size)
    vals[0] = np.inf
    vals[1:] = ml_density(alpha, lam, grid.nodes[1:])
    out = frac_integral(GridFn(grid, vals), 1.0 - alpha,
                        first_cell_power=alpha - 1.0)
    ref = lam * (1.0 - ml_cdf(alpha, lam, grid.nodes))
    sel = grid.nodes >= 0.01
    rel = np.abs(out.values[sel] - ref[sel]) / ref[sel]
    assert rel.max() < 5e-4


def test_frac_derivative_constant_and_power():
    grid = TimeGrid.uniform(1.0, 300)
    r = 0.35
    out = frac_derivative(GridFn(grid, np.full(301, 2.0)), r)
    ref = 2.0 * grid.nodes[1:] ** (-r) / math.gamma(1.0 - r)
    assert np.max(np.abs(out.values[1:] - ref)) < 1e-12
    assert np.isnan(out.values[0])
    # power rule D^r t^r = Gamma(r+1) within scheme tolerance
    out2 = frac_derivative(GridFn(grid, grid.nodes ** r), r)
    err = np.abs(out2.values[30:] - math.gamma(r + 1.0))
    assert err.max() < 2e-3


def test_frac_roundtrip_identity():
    """Semigroup identity both ways, within scheme tolerance.

    The intermediate functions carry t^r-type kinks at the origin, so the
    composition is exact only up to the interpolation error of those kinks
    (graded grid for the D(I(.)) direction, origin excluded)."""
    r = 0.6
    grid = TimeGrid.uniform(1.0, 256)
    d = frac_derivative(GridFn(grid, grid.nodes.copy()), r)
    vals = d.values.copy()
    vals[0] = 0.0  # D^r t vanishes at 0
    back = frac_integral(GridFn(grid, vals), r)
    assert np.max(np.abs(back.values - grid.nodes)) < 2e-3

    graded = TimeGrid.graded(1.0, 400, 3.0)
    f = 1.0 + 2.0 * graded.nodes
    b2 = frac_derivative(frac_integral(GridFn(graded, f), r), r)
    sel = graded.nodes >= 0.01
    assert np.max(np.abs(b2.values[sel] - f[sel])) < 2e-3


def test_ml_kernel_convolve_constant():
    """f * c = c F(t): telescoping of the exact cell masses."""
    alpha, lam = 0.6, 2.0
    grid = TimeGrid.uniform(1.0, 128)
    out = ml_kernel_convolve(alpha, lam, GridFn(grid, np.full(129, 2.0)))
    ref = 2.0 * np.concatenate([[0.0], ml_cdf(alpha, lam, grid.nodes[1:])])
    assert np.max(np.abs(out - ref)) < 1e-13


def test_grid_validation():
    with pytest.raises(DomainError):
        TimeGrid(np.array([0.5, 1.0]))
    with pytest.raises(DomainError):
        TimeGrid(np.array([0.0, 1.0, 0.5]))
    with pytest.raises(DomainError):
        GridFn(TimeGrid.uniform(1.0, 4), np.zeros(3))
