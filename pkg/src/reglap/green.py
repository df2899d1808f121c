"""Boundary traces of the regional operator on an interval.

Covers the fractional normal derivative, the boundary constant N_sigma that
weights it in the integration-by-parts formula, a pointwise evaluator of the
continuum operator that stays accurate next to the boundary, and the
refinement study of the Green-formula residual.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .geometry import Domain, Grid
from .operator import FractionalOrder, normalization_constant

_QUAD = dict(limit=400, epsabs=1e-15, epsrel=1e-13)


class QuadratureError(RuntimeError):
    pass


def _quad(func, a, b, **kw):
    # tolerances sit at the floating-point floor on purpose; QUADPACK warns
    # when it cannot certify them, the returned value is still its best
    opts = dict(_QUAD)
    opts.update(kw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(func, a, b, **opts)
    return val, err


@dataclass(frozen=True)
class GreenTestFunction:
    """u = f * h + g with h = rho^sigma and rho(x) = (x - x_lo)(x_hi - x) / |domain|.

    rho equals the distance to the nearer endpoint to first order, so h is
    an admissible choice of the weight d^sigma near the boundary.
    """

    f_part: Callable
    g_part: Callable
    order: FractionalOrder
    domain: Domain

    def __post_init__(self):
        self.order.require_trace()

    def weight(self, x):
        d = self.domain
        rho = (x - d.x_lo) * (d.x_hi - x) / d.length
        return np.maximum(rho, 0.0) ** self.order.sigma

    def __call__(self, x):
        return self.f_part(x) * self.weight(x) + self.g_part(x)

    def remainder(self, x, endpoint: float):
        """u minus f(r) (|x - r|)^sigma, which is C^1 up to the endpoint r."""
        d = self.domain
        sig = self.order.sigma
        dist = abs(x - endpoint)
        other = d.x_hi - x if endpoint == d.x_lo else x - d.x_lo
        ratio = max(other, 0.0) / d.length
        # f(x) ratio^sig - f(r), arranged so both terms are O(1)
        bracket = self.f_part(x) * ratio ** sig - self.f_part(endpoint)
        return dist ** sig * bracket + self.g_part(x)


def fractional_normal_derivative(u: Callable, endpoint: float, domain: Domain,
                                 order: FractionalOrder, tau_seq=None, delta=None,
                                 n_terms: int | None = None) -> float:
    """Extrapolated limit of sigma (u(r) - u(r - tau nu)) / tau^sigma.

    nu is the outward normal (-1 at x_lo, +1 at x_hi).  The difference
    quotient admits an expansion in the powers j - sigma and j (j >= 1), so
    the limit is recovered by a least-squares fit over the tau sequence that
    removes the leading terms of that expansion.
    """
    order.require_trace()
    sig = order.sigma
    if endpoint == domain.x_lo:
        nu = -1.0
    elif endpoint == domain.x_hi:
        nu = 1.0
    else:
        raise ValueError("endpoint must be x_lo or x_hi")
    if tau_seq is None:
        if delta is None:
            delta = 0.1 * domain.length
        tau_seq = delta * 2.0 ** -np.arange(1, 13)
    tau = np.asarray(tau_seq, dtype=float)
    if np.any(np.diff(tau) >= 0) or np.any(tau <= 0):
        raise ValueError("tau_seq must be positive and strictly decreasing")
    ur = u(endpoint)
    quotient = np.array([sig * (ur - u(endpoint - t * nu)) / t ** sig for t in tau])
    exponents = expansion_exponents(sig)
    if n_terms is None:
        n_terms = min(len(exponents), len(tau) - 4)
    exps = exponents[:n_terms]
    t_scaled = tau / tau[0]
    design = np.column_stack([np.ones_like(tau)] + [t_scaled ** e for e in exps])
    coef, *_ = np.linalg.lstsq(design, quotient, rcond=None)
    return float(coef[0])


def expansion_exponents(sigma: float, top: float = 4.5, merge: float = 1e-9) -> list[float]:
    """Sorted, de-duplicated powers j - sigma and j below ``top``."""
    cand = sorted([j - sigma for j in range(1, 6)] + [float(j) for j in range(1, 6)])
    out: list[float] = []
    for e in cand:
        if e <= 0 or e > top:
            continue
        if out and abs(e - out[-1]) <= merge:
            continue
        out.append(e)
    return out


# boundary constant -------------------------------------------------------

def _normal_integral_closed_form(sigma: float) -> float:
    """int_0^inf (|t-1|^-sigma - max(t,1)^-sigma) t^(sigma-1) dt in closed form.

    Obtained from Beta-function identities on the four pieces; used only as
    an independent check on the quadrature paths below.
    """
    return (math.pi / math.sin(math.pi * sigma) - 1.0 / sigma
            - float(special.digamma(1.0 - sigma)) - float(np.euler_gamma))


def normal_integrand(tau, sigma: float):
    tau = np.asarray(tau, dtype=float)
    return (np.abs(tau - 1.0) ** -sigma - np.maximum(tau, 1.0) ** -sigma) * tau ** (sigma - 1.0)


def _normal_integral_adaptive(sigma: float) -> float:
    # [0, 1/2]: integrand ~ sigma tau^sigma, smooth after the weight
    p1 = _quad(lambda t: ((1.0 - t) ** -sigma - 1.0) * t ** (sigma - 1.0), 0.0, 0.5)[0]
    # [1/2, 1]: (1 - t)^-sigma singularity handled by the algebraic weight
    p2 = _quad(lambda t: t ** (sigma - 1.0), 0.5, 1.0, weight="alg", wvar=(0.0, -sigma))[0]
    p2 -= _quad(lambda t: t ** (sigma - 1.0), 0.5, 1.0)[0]
    # [1, 2]: (t - 1)^-sigma at the left end
    p3 = _quad(lambda t: t ** (sigma - 1.0), 1.0, 2.0, weight="alg", wvar=(-sigma, 0.0))[0]
    p3 -= _quad(lambda t: 1.0 / t, 1.0, 2.0)[0]
    # [2, inf): t = 1/tau maps to ((1 - t)^-sigma - 1) / t on (0, 1/2]
    p4 = _quad(lambda t: math.expm1(-sigma * math.log1p(-t)) / t if t > 0 else sigma, 0.0, 0.5)[0]
    return p1 + p2 + p3 + p4


def _gauss_jacobi(n: int, a: float, b: float, alpha: float, beta: float):
    """Nodes/weights on [a, b] for the weight (b - x)^alpha (x - a)^beta."""
    x, w = special.roots_jacobi(n, alpha, beta)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), w * half ** (1.0 + alpha + beta)


def _normal_integral_fixed(sigma: float, n_nodes: int) -> float:
    """Same four pieces with fixed Gauss-Jacobi / Gauss-Legendre rules."""
    xl, wl = np.polynomial.legendre.leggauss(n_nodes)

    def legendre(func, a, b):
        half = 0.5 * (b - a)
        return half * float(np.dot(wl, func(a + half * (xl + 1.0))))

    # [0, 1/2]: weight t^sigma, smooth factor ((1-t)^-sigma - 1)/t
    x, w = _gauss_jacobi(n_nodes, 0.0, 0.5, 0.0, sigma)
    p1 = float(np.dot(w, np.expm1(-sigma * np.log1p(-x)) / x))
    # [1/2, 1]: weight (1 - t)^-sigma against t^(sigma - 1), minus a smooth part
    x, w = _gauss_jacobi(n_nodes, 0.5, 1.0, -sigma, 0.0)
    p2 = float(np.dot(w, x ** (sigma - 1.0))) - legendre(lambda t: t ** (sigma - 1.0), 0.5, 1.0)
    # [1, 2]: weight (t - 1)^-sigma
    x, w = _gauss_jacobi(n_nodes, 1.0, 2.0, 0.0, -sigma)
    p3 = float(np.dot(w, x ** (sigma - 1.0))) - legendre(lambda t: 1.0 / t, 1.0, 2.0)
    p4 = legendre(lambda t: np.expm1(-sigma * np.log1p(-t)) / t, 0.0, 0.5)
    return p1 + p2 + p3 + p4


def normal_deriv_constant(sigma: float, n_nodes: int | None = None,
                          convention: str = "two_pi") -> float:
    """N_sigma = C_{1,(sigma+1)/2} / ((sigma+1) sigma) * int_0^inf (...) dtau.

    ``n_nodes=None`` uses adaptive quadrature; an integer selects the fixed
    Gauss rule with that many nodes per piece (for self-convergence studies).
    """
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    if n_nodes is None:
        integral = _normal_integral_adaptive(sigma)
    else:
        integral = _normal_integral_fixed(sigma, n_nodes)
    if not np.isfinite(integral):
        raise QuadratureError(f"boundary-constant integral diverged for sigma={sigma}")
    c = normalization_constant(1, 0.5 * (sigma + 1.0), convention)
    return c / ((sigma + 1.0) * sigma) * integral


# pointwise continuum operator --------------------------------------------

def regional_laplacian_at(u: Callable, x: float, domain: Domain, s: float,
                          taylor_cut: float | None = None) -> float:
    """PV int_domain (u(x) - u(y)) |x - y|^(-1-2s) dy, without the constant.

    Symmetric part over |t| < d(x), then the one-sided remainder out to the
    far endpoint.  Suitable for functions that are C^2 inside and C^1 (or
    better) up to the boundary.

    With ``taylor_cut`` the symmetric part over t < taylor_cut is replaced
    by -u''(x) t^(2-2s)/(2-2s), u'' from a central difference.  Rounding in
    u is amplified by t^(-1-2s) at tiny offsets, so this is the accurate
    choice for C^2 functions evaluated very close to the boundary.
    """
    lo, hi = domain.x_lo, domain.x_hi
    p = 1.0 + 2.0 * s
    near = min(x - lo, hi - x)
    far = max(x - lo, hi - x)
    ux = u(x)
    start = 0.0
    sym = 0.0
    if taylor_cut is not None and taylor_cut > 0:
        start = min(taylor_cut, near)
        h = 0.5 * start
        upp = (u(x + h) - 2.0 * ux + u(x - h)) / (h * h)
        sym = -upp * start ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
    if start < near:
        sym += _quad(lambda t: (2.0 * ux - u(x - t) - u(x + t)) * t ** -p, start, near)[0]
    if x - lo < hi - x:
        rest = _quad(lambda t: (ux - u(x + t)) * t ** -p, near, far)[0]
    else:
        rest = _quad(lambda t: (ux - u(x - t)) * t ** -p, near, far)[0]
    return sym + rest


def _halfline_power_defect(x: float, endpoint: float, domain: Domain, s: float) -> float:
    """Operator of |y - r|^sigma on the domain at x.

    On the half-line starting at r this power is harmonic for the regional
    operator, so only the part of the half-line beyond the opposite endpoint
    contributes: int_{beyond} (|y - r|^sigma - |x - r|^sigma) |x - y|^(-1-2s) dy.
    """
    sig = 2.0 * s - 1.0
    p = 1.0 + 2.0 * s
    length = domain.length
    dx = abs(x - endpoint)
    gap = length - dx  # distance from x to the opposite endpoint
    # y = opposite endpoint + z, z in (0, inf); substitute z = gap * w/(1-w)
    def integrand(z):
        return ((length + z) ** sig - dx ** sig) * (gap + z) ** -p
    head = _quad(integrand, 0.0, max(gap, 1.0))[0]
    tail = _quad(integrand, max(gap, 1.0), np.inf)[0]
    return head + tail


def green_operator_at(u: GreenTestFunction, x: float) -> float:
    """(-Delta)^s_Omega u at x (without the constant), accurate as x -> boundary.

    Near an endpoint r, u = f(r) |x - r|^sigma + (C^1 remainder).  The power
    is handled by the exact half-line identity and the remainder by direct
    quadrature, which avoids the 1/d cancellation of the naive formula.
    """
    d = u.domain
    endpoint = d.x_lo if x - d.x_lo <= d.x_hi - x else d.x_hi
    s = u.order.s
    coeff = u.f_part(endpoint)
    rem = regional_laplacian_at(lambda y: u.remainder(y, endpoint), x, d, s)
    if coeff == 0.0:
        return rem
    return coeff * _halfline_power_defect(x, endpoint, d, s) + rem


def graded_midpoint_rule(grid: Grid, levels: int = 20, ratio: float = 0.5):
    """Midpoint rule on the grid cells with both boundary cells refined
    geometrically toward the boundary.  Returns (points, weights)."""
    dx = grid.spacing
    lo, hi = grid.domain.x_lo, grid.domain.x_hi
    # boundary cell [0, dx] in distance: panels [dx r^(k+1), dx r^k], plus the innermost
    edges = dx * ratio ** np.arange(levels + 1)
    edges = np.append(edges, 0.0)
    left_pts = lo + 0.5 * (edges[:-1] + edges[1:])
    left_w = edges[:-1] - edges[1:]
    inner = grid.centers[1:-1]
    inner_w = np.full(inner.shape, dx)
    right_pts = hi - 0.5 * (edges[:-1] + edges[1:])
    pts = np.concatenate([left_pts[::-1], inner, right_pts])
    wts = np.concatenate([left_w[::-1], inner_w, left_w])
    return pts, wts


def gagliardo_continuum(u: Callable, v: Callable, domain: Domain, s: float,
                        points: np.ndarray, weights: np.ndarray) -> float:
    """[u, v] with the outer integral by the given rule and the inner one adaptive."""
    lo, hi = domain.x_lo, domain.x_hi
    p = 1.0 + 2.0 * s
    total = 0.0
    for x, wt in zip(points, weights):
        ux, vx = u(x), v(x)
        f = lambda y: (ux - u(y)) * (vx - v(y)) * abs(x - y) ** -p
        inner = _quad(f, lo, x)[0] + _quad(f, x, hi)[0]
        total += wt * inner
    return total


@dataclass
class GreenResidual:
    n_cells: int
    volume: float
    energy: float
    boundary: float
    residual: float
    fitted_constant: float


def green_formula_residual(u: GreenTestFunction, v: Callable, grid: Grid,
                           convention: str = "two_pi", levels: int = 20,
                           delta: float | None = None) -> GreenResidual:
    """| int v L u - (c/2)[u, v] + N_sigma sum_r v(r) d_nu u(r) |.

    The volume integrals use the graded midpoint rule on ``grid``; the
    normal derivatives use the extrapolated difference quotient.  The
    fitted constant is the value of N_sigma that would zero the residual.
    """
    order = u.order
    order.require_trace()
    s = order.s
    c = normalization_constant(1, s, convention)
    pts, wts = graded_midpoint_rule(grid, levels=levels)
    vols = np.array([green_operator_at(u, x) for x in pts])
    vv = np.array([v(x) for x in pts])
    volume = c * float(np.dot(wts, vv * vols))
    v_const = np.all(vv == vv[0])
    if v_const:
        energy = 0.0
    else:
        energy = 0.5 * c * gagliardo_continuum(u, v, grid.domain, s, pts, wts)
    dom = grid.domain
    normals = [fractional_normal_derivative(u, r, dom, order, delta=delta) for r in dom.boundary]
    flux = sum(v(r) * dn for r, dn in zip(dom.boundary, normals))
    n_sigma = normal_deriv_constant(order.sigma, convention=convention)
    residual = abs(volume - energy + n_sigma * flux)
    fitted = (volume - energy) / (-flux) if flux != 0.0 else float("nan")
    return GreenResidual(grid.n_cells, volume, energy, n_sigma * flux, residual, fitted)


def green_refinement_study(u: GreenTestFunction, v: Callable, sizes=(64, 128, 256, 512),
                           convention: str = "two_pi"):
    """Residual per grid size plus the least-squares rate in log2 units."""
    rows = [green_formula_residual(u, v, Grid(u.domain, n), convention) for n in sizes]
    res = np.array([r.residual for r in rows])
    h = np.log2(np.asarray(sizes, dtype=float))
    if np.all(res > 0):
        rate = -float(np.polyfit(h, np.log2(res), 1)[0])
    else:
        rate = float("nan")
    return rows, rate
