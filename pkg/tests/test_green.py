import math

import numpy as np
import pytest

from reglap.geometry import Domain, Grid
from reglap.green import (GreenTestFunction, _normal_integral_adaptive, _normal_integral_closed_form,
                          _normal_integral_fixed, expansion_exponents, fractional_normal_derivative,
                          graded_midpoint_rule, green_refinement_study, normal_deriv_constant,
                          regional_laplacian_at)
from reglap.operator import FractionalOrder, normalization_constant

SIGMAS = (0.1, 0.5, 0.9)


def test_closed_form_integral_at_one_half():
    # digamma(1/2) = -gamma - 2 ln 2, so the integral is pi - 2 + 2 ln 2
    assert _normal_integral_closed_form(0.5) == pytest.approx(math.pi - 2 + 2 * math.log(2), rel=1e-14)


@pytest.mark.parametrize("sigma", SIGMAS + (0.3, 0.75))
def test_three_routes_to_the_boundary_integral_agree(sigma):
    closed = _normal_integral_closed_form(sigma)
    assert _normal_integral_adaptive(sigma) == pytest.approx(closed, rel=1e-12)
    assert _normal_integral_fixed(sigma, 40) == pytest.approx(closed, rel=1e-12)


@pytest.mark.parametrize("sigma", SIGMAS)
def test_boundary_constant_self_converges_under_node_doubling(sigma):
    vals = [normal_deriv_constant(sigma, n_nodes=n) for n in (8, 16, 32, 64)]
    assert abs(vals[-1] - vals[-2]) <= 1e-8
    assert normal_deriv_constant(sigma) == pytest.approx(vals[-1], rel=1e-12)


def test_boundary_constant_prefactor():
    sigma = 0.5
    s = 0.5 * (sigma + 1)
    expected = normalization_constant(1, s) / (1.5 * 0.5) * (math.pi - 2 + 2 * math.log(2))
    assert normal_deriv_constant(sigma) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        normal_deriv_constant(1.0)


def test_expansion_exponents_sorted_and_merged():
    ex = expansion_exponents(0.5)
    assert ex == sorted(ex) and len(ex) == len(set(ex))
    # sigma = 1/2 makes 1.5 = 2 - sigma distinct from the integers, 1 - sigma = 0.5 first
    assert ex[0] == pytest.approx(0.5)
    merged = expansion_exponents(1e-12)
    assert all(b - a > 1e-9 for a, b in zip(merged, merged[1:]))


@pytest.mark.parametrize("s", [0.55, 0.75, 0.95])
def test_normal_derivative_of_smooth_function_vanishes(s):
    order = FractionalOrder(s)
    dom = Domain()
    for r in dom.boundary:
        assert abs(fractional_normal_derivative(np.cos, r, dom, order)) <= 1e-6


@pytest.mark.parametrize("s", [0.55, 0.75, 0.95])
def test_normal_derivative_of_weight_is_minus_sigma(s):
    # u = d^sigma near each endpoint: sigma (0 - tau^sigma) / tau^sigma = -sigma exactly at leading order
    order = FractionalOrder(s)
    dom = Domain(-1.0, 2.0)
    u = GreenTestFunction(lambda x: 1.0, lambda x: 0.0, order, dom)
    for r in dom.boundary:
        assert fractional_normal_derivative(u, r, dom, order) == pytest.approx(-order.sigma, abs=1e-6)


def test_normal_derivative_argument_checks():
    order = FractionalOrder(0.75)
    dom = Domain()
    with pytest.raises(ValueError):
        fractional_normal_derivative(np.cos, 0.5, dom, order)
    with pytest.raises(ValueError):
        fractional_normal_derivative(np.cos, 0.0, dom, order, tau_seq=[0.1, 0.2, 0.05])


@pytest.mark.parametrize("s,x", [(0.3, 0.2), (0.75, 0.6), (0.9, 0.05)])
def test_pointwise_operator_on_linear_field(s, x):
    exact = (x ** (1 - 2 * s) - (1 - x) ** (1 - 2 * s)) / (1 - 2 * s)
    assert regional_laplacian_at(lambda y: y, x, Domain(), s) == pytest.approx(exact, rel=1e-9)


def test_pointwise_operator_on_quadratic_field_with_taylor_cut():
    # u = y^2: (x^2 - y^2) = (x - y)(x + y) = 2x(x - y) - (x - y)^2
    s, x = 0.75, 0.003
    p = 1 + 2 * s
    lin = (x ** (1 - 2 * s) - (1 - x) ** (1 - 2 * s)) / (1 - 2 * s)
    quad = -(x ** (2 - p + 1) + (1 - x) ** (2 - p + 1)) / (2 - p + 1)
    exact = 2 * x * lin + quad
    got = regional_laplacian_at(lambda y: y * y, x, Domain(), s, taylor_cut=1e-3 * x)
    assert got == pytest.approx(exact, rel=1e-8)


def test_graded_rule_integrates_polynomials():
    pts, wts = graded_midpoint_rule(Grid(Domain(0.0, 2.0), 32))
    assert wts.sum() == pytest.approx(2.0, rel=1e-13)
    assert np.dot(wts, pts) == pytest.approx(2.0, rel=1e-13)


def test_green_residual_decreases_with_rate_near_one():
    u = GreenTestFunction(lambda x: 1.0, lambda x: 0.0, FractionalOrder(0.75), Domain())
    rows, rate = green_refinement_study(u, lambda x: 1.0, sizes=(32, 64, 128))
    res = [r.residual for r in rows]
    assert all(b < a for a, b in zip(res, res[1:]))
    assert 0.8 < rate < 1.2
    n_sig = normal_deriv_constant(0.5)
    assert rows[-1].fitted_constant == pytest.approx(n_sig, rel=1e-3)
