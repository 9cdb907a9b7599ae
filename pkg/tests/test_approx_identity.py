import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special

from bivar.approx_identity import (
    KERNEL_FAMILIES,
    bilinear_convolution,
    default_t_params,
    derivative_kernel_identity_check,
    direction_grid,
    factorized_convolution,
    gaussian_1d,
    kernel_regularity_condition,
    kernel_size_condition,
    long_variation_domination,
    make_kernel,
    make_psi_kernel,
    product_rule_check,
    richardson_slope,
    short_variation_square_bound,
    square_function,
    triangle_split_check,
    variation_of_identity_family,
)
from bivar.signal import StepFunction, dilate
from conftest import dyadic_steps

FAMILIES = sorted(KERNEL_FAMILIES)
off_lattice = st.integers(-20, 20).map(lambda k: k / 4 + 0.1)


def correlated_box(r, u_lo, u_hi, v_lo, v_hi):
    """``P(u_lo < U <= u_hi, v_lo < V <= v_hi)`` for a standard normal pair with correlation ``r``."""
    s = math.sqrt(1 - r * r)

    def inner(u):
        return math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi) * (special.ndtr((v_hi - r * u) / s) - special.ndtr((v_lo - r * u) / s))

    val, _ = integrate.quad(inner, u_lo, u_hi, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


@pytest.mark.parametrize("name", FAMILIES)
def test_unit_mass_and_cancellation(name):
    pk = make_psi_kernel(name)
    assert abs(pk.phi.mass - 1.0) <= 1e-10
    assert abs(pk.cancellation) <= 1e-10
    assert sum(pk.phi.quadrant_masses) == pytest.approx(1.0, abs=1e-15)
    assert sum(pk.psi.quadrant_masses) == pytest.approx(0.0, abs=1e-15)


def test_unknown_kernel():
    with pytest.raises(ValueError):
        make_kernel("cauchy")
    with pytest.raises(ValueError):
        make_psi_kernel("gaussian-2d").select("chi")


@pytest.mark.parametrize("name", FAMILIES)
def test_constant_on_plateau(name, chi):
    pk = make_psi_kernel(name)
    wide = StepFunction.indicator(-100, 100)
    assert bilinear_convolution(pk.phi, wide, wide, 0.5, 0.0) == pytest.approx(1.0, abs=1e-13)
    assert abs(bilinear_convolution(pk.psi, wide, wide, 0.5, 0.0)) < 1e-13


@given(dyadic_steps(), dyadic_steps(), st.floats(0.05, 10), st.floats(-5, 5))
def test_tensor_quadrature_matches_factorized(f, g, t, x):
    K = make_kernel("gaussian-product")
    k = gaussian_1d()
    expect = float(factorized_convolution(k, f, t, x) * factorized_convolution(k, g, t, x))
    assert bilinear_convolution(K, f, g, t, x) == pytest.approx(expect, abs=1e-12)


@pytest.mark.parametrize("t,x", [(0.3, 0.5), (1.0, 0.2), (2.0, 1.7), (0.7, -0.4)])
def test_correlated_kernel_against_box_probability(t, x):
    K = make_kernel("gaussian-2d")
    f = StepFunction.indicator(0.0, 1.0)
    g = StepFunction.indicator(-0.5, 0.75)
    # f(x - t u) = 1 for (x - 1)/t < u <= x/t
    expect = correlated_box(0.5, (x - 1.0) / t, x / t, (x - 0.75) / t, (x + 0.5) / t)
    assert bilinear_convolution(K, f, g, t, x) == pytest.approx(expect, abs=1e-12)


@pytest.mark.parametrize("name", FAMILIES)
def test_small_t_limit_at_a_jump(name):
    K = make_kernel(name)
    f = StepFunction([-1, 0, 1], [2.0, -1.0])
    g = StepFunction([-1, 0, 1], [1.0, 3.0])
    lim = K.limit_at_zero(f, g, 0.0)
    assert bilinear_convolution(K, f, g, 1e-3, 0.0) == pytest.approx(lim, abs=1e-12)


def test_indicator_variation_at_centre(chi):
    K = make_kernel("gaussian-product")
    assert variation_of_identity_family(K, chi, chi, 0.5, 3.0).value == pytest.approx(1.0, abs=1e-12)


@given(dyadic_steps(max_cells=3), dyadic_steps(max_cells=3), off_lattice, st.sampled_from([2.0, 2.5, 3.0]))
def test_triangle_split_per_grid(f, g, x, rho):
    pk = make_psi_kernel("gaussian-2d")
    t = default_t_params(f, g, x, 4)
    lhs, rhs = triangle_split_check(pk, f, g, x, rho, t)
    assert lhs <= rhs + 1e-12


@given(dyadic_steps(max_cells=3), dyadic_steps(max_cells=3), off_lattice, st.sampled_from([1.0, 2.0, 3.0]))
def test_product_family_bound(f, g, x, rho):
    pk = make_psi_kernel("gaussian-2d")
    lhs, rhs = product_rule_check(pk, f, g, x, rho, default_t_params(f, g, x, 4))
    assert lhs <= rhs * (1 + 1e-12) + 1e-15


@given(dyadic_steps(max_cells=3), dyadic_steps(max_cells=3), off_lattice, st.sampled_from([2.0, 2.5, 4.0]))
def test_long_variation_within_twice_square_sum(f, g, x, rho):
    # |a - b|**2 <= 2 (a**2 + b**2) gives V_2 <= 2 (sum a_j**2)**(1/2); V_rho <= V_2 for rho >= 2
    vl, sq = long_variation_domination(make_psi_kernel("gaussian-2d"), f, g, x, rho, (-10, 10))
    assert vl <= 2.0 * sq * (1 + 1e-12) + 1e-15


def test_long_variation_unit_constant_counterexample():
    # two dyadic samples of opposite sign already exceed the square sum with constant 1
    f = StepFunction([0, 0.5, 1], [1.0, -1.0])
    vals = []
    for x in np.linspace(-1, 2, 31) + 0.01:
        vl, sq = long_variation_domination(make_psi_kernel("gaussian-2d"), f, f, float(x), 2.0, (-6, 6))
        vals.append(vl / sq if sq > 0 else 0.0)
    assert max(vals) > 1.0


def test_derivative_identity_and_slope():
    pk = make_psi_kernel("gaussian-2d")
    f = StepFunction([0, 1, 2], [1.0, -0.5])
    g = StepFunction([-0.5, 1.5], [2.0])
    lhs, rhs = derivative_kernel_identity_check(pk, f, g, 0.3, 0.8)
    assert abs(lhs - rhs) <= 1e-5 * abs(rhs)
    slope, mism = richardson_slope(pk, f, g, 0.3, 0.8)
    assert 1.7 <= slope <= 2.3
    assert np.all(np.diff(mism) < 0)


def test_product_kernel_psi_vanishes_on_diagonal(chi):
    # for a tensor phi with the same marginal, psi(f, f) is identically zero
    pk = make_psi_kernel("gaussian-product")
    assert abs(bilinear_convolution(pk.psi, chi, chi, 0.7, 0.3)) < 1e-15


def test_square_function_divergent_at_a_jump(chi):
    # both factors jump at x = 1; the limit of psi_t is the correlation term asin(r) / (2 pi)
    pk = make_psi_kernel("gaussian-2d")
    assert pk.psi.limit_at_zero(chi, chi, 1.0) == pytest.approx(1 / 12, rel=1e-15)
    res = square_function(pk, chi, chi, 1.0, "psi")
    assert res.flags == ("divergent",) and res.value == math.inf


def test_square_function_budget_and_scaling():
    pk = make_psi_kernel("gaussian-2d")
    f = StepFunction([0, 1, 2], [1.0, -0.5])
    g = StepFunction([-0.5, 1.5], [2.0])
    res = square_function(pk, f, g, 0.3, "psi")
    assert math.isfinite(res.value) and res.value > 0
    assert res.budget < 1e-6 * res.value
    # dt/t is dilation invariant
    d = square_function(pk, dilate(f, 4.0), dilate(g, 4.0), 0.3 / 4, "psi")
    assert d.value == pytest.approx(res.value, rel=1e-6)
    with pytest.raises(ValueError):
        square_function(pk, f, g, 0.3, "phi")


def test_short_variation_square_bound_finite():
    pk = make_psi_kernel("gaussian-2d")
    f = StepFunction([0, 1, 2], [1.0, -0.5])
    g = StepFunction([-0.5, 1.5], [2.0])
    s2sq, gg = short_variation_square_bound(pk, f, g, 0.3, 8)
    assert math.isfinite(s2sq) and math.isfinite(gg) and gg > 0


def test_direction_grid_nesting():
    coarse = {tuple(p) for p in np.round(direction_grid(n_dir=8), 15)}
    fine = {tuple(p) for p in np.round(direction_grid(n_dir=32), 15)}
    assert coarse <= fine
    pts = direction_grid((2.0,), 16)
    assert np.allclose(np.abs(pts).sum(axis=1), 2.0)


@pytest.mark.parametrize("name", FAMILIES)
def test_size_condition_finite_and_stable(name):
    phi = make_kernel(name)
    sup, rows = kernel_size_condition(phi, 2.5, direction_grid(n_dir=16), per_octave=16)
    assert math.isfinite(sup) and sup > 0
    for r in rows:
        assert abs(r["refinement_delta"]) <= 0.02 * sup
        assert r["weighted_value"] <= r["v1_weighted"] * (1 + 1e-6)


def test_size_condition_is_scale_free():
    phi = make_kernel("gaussian-2d")
    _, rows = kernel_size_condition(phi, 2.5, [(1.0, 0.0), (2.0, 0.0)], per_octave=16)
    assert rows[0]["weighted_value"] == rows[1]["weighted_value"]


def test_regularity_condition_stable_and_checked():
    phi = make_kernel("gaussian-2d")
    pts = direction_grid(n_dir=16)
    a, _ = kernel_regularity_condition(phi, 2.5, pts, (0.1,), per_octave=16)
    b, _ = kernel_regularity_condition(phi, 2.5, pts, (0.1,), per_octave=32)
    assert math.isfinite(a) and abs(b - a) <= 0.1 * a
    with pytest.raises(ValueError):
        kernel_regularity_condition(phi, 2.5, [(0.1, 0.0)], (0.1,))
    with pytest.raises(ValueError):
        kernel_size_condition(phi, 2.5, [(0.0, 0.0)])
