"""Fractional Riccati solvers: exact cases, cross-scheme agreement,
monotonicity and convergence order."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughhedge.riccati import (RiccatiCoeffs, chi_from_h,
                                solve_riccati_adams,
                                solve_riccati_adams_many,
                                solve_riccati_volterra)
from roughhedge.special_fn import (GridFn, TimeGrid, ml_cdf,
                                   ml_kernel_convolve)
from oracles import heston_riccati_h

ALPHA, LAM, NU, RHO = 0.6, 2.0, 0.3, -0.7


@pytest.fixture(scope="module")
def grid():
    return TimeGrid.uniform(1.0, 512)


def test_zero_coefficients_zero_solution(grid):
    sol = solve_riccati_adams(RiccatiCoeffs(0.0, 0.0, 0.0, ALPHA), grid)
    assert np.all(sol.values == 0.0)
    assert not sol.blew_up
    solv = solve_riccati_volterra(RiccatiCoeffs(0.0, 0.0, 0.0, ALPHA), LAM, grid)
    assert np.all(solv.values == 0.0)


def test_linear_equation_ml_cdf(grid):
    """c2 = 0, c1 = -lam: the resolvent lemma gives h = (c0/lam) F."""
    c0 = 0.7 - 0.3j
    ref = (c0 / LAM) * ml_cdf(ALPHA, LAM, grid.nodes)
    sa = solve_riccati_adams(RiccatiCoeffs(c0, -LAM, 0.0, ALPHA), grid)
    assert np.max(np.abs(sa.values - ref)) < 5e-7
    sv = solve_riccati_volterra(RiccatiCoeffs(c0, -LAM, 0.0, ALPHA), LAM, grid)
    assert np.max(np.abs(sv.values - ref)) < 1e-14


def test_classical_limit_closed_form(grid):
    z = 1.5 + 3.0j
    co = RiccatiCoeffs(0.5 * (z * z - z), z * RHO * NU - LAM, 0.5 * NU * NU, 1.0)
    sol = solve_riccati_adams(co, grid)
    ref = heston_riccati_h(co.c0, co.c1, co.c2, grid.nodes)
    assert np.max(np.abs(sol.values - ref)) < 5e-6


@pytest.mark.parametrize("a", [-2.0, -1.0, 0.0, 0.5])
def test_adams_volterra_agreement(grid, a):
    co = RiccatiCoeffs(a, -LAM, 0.5 * NU * NU, ALPHA)
    sa = solve_riccati_adams(co, grid)
    sv = solve_riccati_volterra(co, LAM, grid)
    assert np.max(np.abs(sa.values - sv.values)) < 1e-6


@settings(max_examples=10, deadline=None)
@given(re_c0=st.floats(-3.0, 0.0), im_c0=st.floats(-1.0, 1.0),
       extra=st.floats(-0.5, 0.5))
def test_agreement_random_draws(re_c0, im_c0, extra):
    """Uniqueness surrogate on random coefficient draws with Re(c0) <= 0;
    tolerance scales with the coefficient size (coarser-scheme error)."""
    grid = TimeGrid.uniform(1.0, 256)
    co = RiccatiCoeffs(re_c0 + 1j * im_c0, extra - LAM, 0.5 * NU * NU, ALPHA)
    sa = solve_riccati_adams(co, grid)
    sv = solve_riccati_volterra(co, LAM, grid)
    scale = 1.0 + abs(co.c0)
    assert np.max(np.abs(sa.values - sv.values)) < 2e-5 * scale


def test_monotonicity_in_a_and_s(grid):
    """a -> g(a, s) nondecreasing at every node; s -> g(a, s) monotone with
    the sign of a."""
    a_values = [-2.0, -1.0, 0.0, 0.5]
    sols = [solve_riccati_adams(RiccatiCoeffs(a, -LAM, 0.5 * NU * NU, ALPHA),
                                grid).values.real for a in a_values]
    for lo, hi in zip(sols, sols[1:]):
        assert np.all(hi - lo >= -1e-12)
    for a, vals in zip(a_values, sols):
        d = np.diff(vals)
        if a < 0:
            assert np.all(d <= 1e-12)
        elif a > 0:
            assert np.all(d >= -1e-12)
        else:
            assert np.max(np.abs(vals)) == 0.0


def test_real_coefficients_real_solution(grid):
    sol = solve_riccati_adams(RiccatiCoeffs(-1.0, -LAM, 0.5 * NU * NU, ALPHA), grid)
    assert np.max(np.abs(sol.values.imag)) == 0.0


def test_conjugate_symmetry(grid):
    z = 1.2 + 4.0j
    co = RiccatiCoeffs(0.5 * (z * z - z), z * RHO * NU - LAM, 0.5 * NU * NU, ALPHA)
    zc = np.conj(z)
    cc = RiccatiCoeffs(0.5 * (zc * zc - zc), zc * RHO * NU - LAM, 0.5 * NU * NU, ALPHA)
    s1 = solve_riccati_adams(co, grid)
    s2 = solve_riccati_adams(cc, grid)
    assert np.max(np.abs(s2.values - np.conj(s1.values))) < 1e-13


def test_volterra_negative_a_bound(grid):
    """Closed-form bound g(-a,t) <= (1-sqrt(1+2 nu^2 a F^2/lam^2))/((nu^2/lam)F)."""
    a = 1.5
    sol = solve_riccati_volterra(RiccatiCoeffs(-a, -LAM, 0.5 * NU * NU, ALPHA),
                                 LAM, grid)
    t = grid.nodes[1:]
    f_cdf = ml_cdf(ALPHA, LAM, t)
    bound = (1.0 - np.sqrt(1.0 + 2.0 * NU ** 2 * a / LAM ** 2 * f_cdf ** 2)) \
        / (NU ** 2 / LAM * f_cdf)
    assert np.all(sol.values[1:].real <= bound + 1e-12)


def test_convergence_order(grid):
    """Grid doubling gains at least 2^(min(2, 1+alpha) - 0.2) against a
    4096-node reference."""
    z = 1.5 + 3.0j
    co = RiccatiCoeffs(0.5 * (z * z - z), z * RHO * NU - LAM, 0.5 * NU * NU, ALPHA)
    ref = solve_riccati_adams(co, TimeGrid.uniform(1.0, 4096)).values
    errs = []
    for n in (256, 512, 1024):
        sol = solve_riccati_adams(co, TimeGrid.uniform(1.0, n))
        errs.append(np.max(np.abs(sol.values - ref[:: 4096 // n])))
    rates = np.log2(np.asarray(errs[:-1]) / np.asarray(errs[1:]))
    assert np.all(rates >= min(2.0, 1.0 + ALPHA) - 0.2)


def test_blowup_flagged_not_raised(grid):
    """Super-critical forcing must blow up and be reported as a state."""
    sol = solve_riccati_adams(RiccatiCoeffs(80.0, -LAM, 0.5 * NU * NU, ALPHA),
                              grid, cap=1e6)
    assert sol.blew_up
    assert sol.blowup_time is not None and 0.0 < sol.blowup_time <= 1.0
    assert np.isnan(sol.values[-1])


def test_chi_identity(grid):
    """(1/lam) f * chi = h nodewise within scheme tolerance."""
    z = 1.5 + 2.0j
    co = RiccatiCoeffs(0.5 * (z * z - z), z * RHO * NU - LAM, 0.5 * NU * NU, ALPHA)
    sol = solve_riccati_adams(co, grid)
    chi = chi_from_h(sol, z, RHO, NU)
    conv = ml_kernel_convolve(ALPHA, LAM, chi) / LAM
    # tolerance set by the piecewise-linear handling of chi's u^alpha kink
    assert np.max(np.abs(conv - sol.values)) < 2e-4


def test_chi_zero_at_z01(grid):
    for z in (0.0, 1.0):
        co = RiccatiCoeffs(0.5 * (z * z - z), z * RHO * NU - LAM, 0.5 * NU * NU, ALPHA)
        sol = solve_riccati_adams(co, grid)
        chi = chi_from_h(sol, z, RHO, NU)
        assert np.max(np.abs(chi.values)) == 0.0


def test_many_matches_single(grid):
    zs = np.array([0.5 + 1j, 1.5 + 5j])
    vals, blew, _ = solve_riccati_adams_many(
        0.5 * (zs * zs - zs), zs * RHO * NU - LAM, 0.5 * NU * NU, ALPHA, grid,
        substeps=2)
    for i, z in enumerate(zs):
        co = RiccatiCoeffs(0.5 * (z * z - z), z * RHO * NU - LAM,
                           0.5 * NU * NU, ALPHA)
        single = solve_riccati_adams(co, grid)
        assert np.max(np.abs(vals[i] - single.values)) < 1e-14
    assert not blew.any()
