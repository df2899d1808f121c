import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from reglap.geometry import Domain, Grid
from reglap.operator import (FractionalOrder, OrderError, apply_regional_laplacian, assemble_weights,
                             cell_kernel_integrals, derivative_commutator, duality_pairing,
                             dump_weights_csv, gagliardo_form, normalization_constant,
                             product_rule_residual, truncated_laplacian)

orders = st.floats(0.05, 0.95)
finite = st.floats(-10, 10, allow_nan=False)


def test_order_validation():
    for bad in (0.0, 1.0, -0.2, 1.3):
        with pytest.raises(OrderError):
            FractionalOrder(bad)
    assert FractionalOrder(0.75).sigma == pytest.approx(0.5)
    assert not FractionalOrder(0.5).has_trace
    with pytest.raises(OrderError):
        FractionalOrder(0.4).require_trace()


def test_normalization_hand_values():
    # s = 1/2: Gamma(1) = 1 and |Gamma(-1/2)| = 2 sqrt(pi)
    assert normalization_constant(1, 0.5, "standard") == pytest.approx(1 / math.pi, rel=1e-14)
    assert normalization_constant(1, 0.5, "two_pi") == pytest.approx(1 / (2 * math.pi ** 2), rel=1e-14)
    # the conventions differ by (4 pi^2)^s
    for s in (0.1, 0.55, 0.95):
        ratio = normalization_constant(1, s, "standard") / normalization_constant(1, s, "two_pi")
        assert ratio == pytest.approx((4 * math.pi ** 2) ** s, rel=1e-13)
    with pytest.raises(OrderError):
        normalization_constant(1, 0.5, "bogus")
    with pytest.raises(OrderError):
        normalization_constant(0, 0.5)


def test_kernel_integrals_hand_values():
    band = cell_kernel_integrals(4, 1.0, 0.5)
    # (a^-1 - b^-1) with (a, b) = (1/2, 3/2) and (3/2, 5/2)
    assert band[0] == 0.0
    assert band[1] == pytest.approx(4 / 3, rel=1e-15)
    assert band[2] == pytest.approx(2 / 3 - 2 / 5, rel=1e-15)


@pytest.mark.parametrize("s", [0.1, 0.55, 0.95])
def test_kernel_integrals_against_quadrature(s):
    dx = 1 / 64
    band = cell_kernel_integrals(64, dx, s)
    for k in (1, 2, 7, 63):
        ref = integrate.quad(lambda t: t ** (-1 - 2 * s), (k - 0.5) * dx, (k + 0.5) * dx,
                             epsabs=0, epsrel=1e-13)[0]
        assert band[k] == pytest.approx(ref, rel=1e-12)


def test_far_kernel_integrals_keep_relative_accuracy():
    # far cells: the naive difference a^-2s - b^-2s cancels catastrophically
    s, n, dx = 0.05, 100000, 1e-5
    band = cell_kernel_integrals(n, dx, s)
    k = n - 1
    a, b = (k - 0.5) * dx, (k + 0.5) * dx
    ref = float(integrate.quad(lambda t: t ** (-1 - 2 * s), a, b, epsabs=0, epsrel=1e-13)[0])
    assert band[k] == pytest.approx(ref, rel=1e-12)


@given(orders, st.integers(4, 64))
def test_weights_symmetric_nonnegative_toeplitz(s, n):
    kw = assemble_weights(Grid(Domain(), n), FractionalOrder(s))
    w = kw.weights
    assert np.array_equal(w, w.T)
    assert np.all(w >= 0) and np.all(np.diag(w) == 0)
    assert np.array_equal(w[1:, 1:], w[:-1, :-1])
    assert not w.flags.writeable


def test_assembly_needs_four_cells():
    with pytest.raises(ValueError):
        assemble_weights(Grid(Domain(), 3), FractionalOrder(0.5))


@given(orders, st.integers(4, 80), finite)
def test_constants_are_annihilated_bit_exactly(s, n, c):
    kw = assemble_weights(Grid(Domain(-1.0, 2.0), n), FractionalOrder(s))
    assert np.all(apply_regional_laplacian(kw, np.full(n, c)) == 0.0)


@given(orders, arrays(float, 24, elements=finite), arrays(float, 24, elements=finite))
def test_duality_pairing_equals_half_gagliardo(s, u, v):
    kw = assemble_weights(Grid(Domain(), 24), FractionalOrder(s))
    lhs = duality_pairing(kw, u, v)
    rhs = 0.5 * kw.c_ns * gagliardo_form(kw, u, v)
    scale = kw.c_ns * kw.weights.max() * (np.linalg.norm(u) + 1) * (np.linalg.norm(v) + 1)
    assert abs(lhs - rhs) <= 1e-12 * scale


@given(orders, arrays(float, 20, elements=finite))
def test_gagliardo_is_a_nonnegative_quadratic_form(s, u):
    kw = assemble_weights(Grid(Domain(), 20), FractionalOrder(s))
    assert gagliardo_form(kw, u, u) >= 0.0


def _direct_apply(kw, u):
    # loop form, independent of the einsum path
    out = np.zeros(kw.n)
    for i in range(kw.n):
        for j in range(kw.n):
            out[i] += kw.weights[i, j] * (u[i] - u[j])
    return kw.c_ns * out


def test_apply_matches_loop_form():
    rng = np.random.default_rng(3)
    kw = assemble_weights(Grid(Domain(), 17), FractionalOrder(0.7))
    u = rng.standard_normal(17)
    assert np.allclose(apply_regional_laplacian(kw, u), _direct_apply(kw, u), rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("s", [0.3, 0.75])
def test_discrete_operator_converges_on_linear_field(s):
    # oracle: for u(y) = y on (0, 1), PV int (x - y)|x - y|^(-1-2s) dy
    #         = (x^(1-2s) - (1-x)^(1-2s)) / (1 - 2s)
    errs = []
    for n in (64, 128, 256, 512):
        kw = assemble_weights(Grid(Domain(), n), FractionalOrder(s))
        x = kw.grid.centers
        exact = kw.c_ns * (x ** (1 - 2 * s) - (1 - x) ** (1 - 2 * s)) / (1 - 2 * s)
        mid = (x > 0.25) & (x < 0.75)
        errs.append(np.max(np.abs(apply_regional_laplacian(kw, x) - exact)[mid]))
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_truncated_laplacian_linear_oracle():
    s = 0.3
    order = FractionalOrder(s)
    grid = Grid(Domain(), 16)
    x, trunc = 0.4, 0.05
    # symmetric window cancels for a linear field; the rest is in closed form
    exact = normalization_constant(1, s) * (x ** (1 - 2 * s) - (1 - x) ** (1 - 2 * s)) / (1 - 2 * s)
    assert truncated_laplacian(grid, order, lambda y: y, x, trunc) == pytest.approx(exact, rel=1e-10)
    with pytest.raises(ValueError):
        truncated_laplacian(grid, order, lambda y: y, x, 0.0)


@given(orders, arrays(float, 16, elements=finite), arrays(float, 16, elements=finite),
       st.integers(0, 15))
def test_product_rule_identity(s, u, v, i):
    kw = assemble_weights(Grid(Domain(), 16), FractionalOrder(s))
    scale = kw.c_ns * kw.weights.sum(axis=1).max() * (np.abs(u).max() + 1) * (np.abs(v).max() + 1)
    assert product_rule_residual(kw, u, v, i) <= 1e-13 * scale


def test_derivative_commutator_identity_is_exact():
    kw = assemble_weights(Grid(Domain(), 64), FractionalOrder(0.6))
    u = np.sin(3 * kw.grid.centers) + kw.grid.centers ** 2
    comm, bpart = derivative_commutator(kw, u)
    assert np.max(np.abs(comm - bpart)) <= 1e-9 * np.max(np.abs(bpart))


def test_commutator_vanishes_for_constants():
    kw = assemble_weights(Grid(Domain(), 32), FractionalOrder(0.4))
    comm, bpart = derivative_commutator(kw, np.full(32, 2.5))
    assert np.all(comm == 0) and np.all(bpart == 0)


def test_field_shape_is_checked():
    kw = assemble_weights(Grid(Domain(), 8), FractionalOrder(0.5))
    with pytest.raises(ValueError):
        apply_regional_laplacian(kw, np.zeros(7))


def test_weights_dump_round_trips(tmp_path):
    kw = assemble_weights(Grid(Domain(), 6), FractionalOrder(0.55))
    path = tmp_path / "w.csv"
    dump_weights_csv(kw, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# n s c_ns"
    back = np.loadtxt(path, delimiter=",", comments="#")
    assert np.array_equal(back, kw.weights)
